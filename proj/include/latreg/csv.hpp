#pragma once

#include "latreg/data.hpp"

#include <string>
#include <vector>

namespace latreg {

// Explicit header-name column mapping; no positional guessing. Parsed from
// the CLI syntax  y=COL,x=COL,sigma=COL[,weight=COL][,z=COL1+COL2][,group=COL]
struct ColumnMap {
    std::string y;
    std::string x;
    std::string sigma;
    std::string weight;          // empty = unit weights
    std::vector<std::string> z;  // empty = no covariates
    std::string group;           // empty = not grouped

    static ColumnMap parse(const std::string& spec);
};

// Minimal strict CSV: UTF-8, comma-separated, header row required, no quoted
// fields, numeric cells parsed as 64-bit floats. Trailing \r is tolerated.

/// Loads and validates an ObservationSet; row order preserved. Errors carry
/// the 1-based data row index.
ObservationSet load_observations(const std::string& path, const ColumnMap& schema);

/// Loads student-level rows grouped by the group column (groups ordered by
/// first appearance, within-group row order preserved).
GroupedData load_grouped(const std::string& path, const ColumnMap& schema);

/// Writes an ObservationSet back out under the schema's column names
/// (fixture generation and round-trip tests).
void write_observations(const std::string& path, const ObservationSet& data,
                        const ColumnMap& schema);

} // namespace latreg
