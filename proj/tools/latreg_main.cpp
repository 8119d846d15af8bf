#include "latreg/csv.hpp"
#include "latreg/errors.hpp"
#include "latreg/inference.hpp"
#include "latreg/linear.hpp"
#include "latreg/mathutil.hpp"
#include "latreg/moments.hpp"
#include "latreg/priors.hpp"
#include "latreg/report.hpp"
#include "latreg/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace latreg;

std::string join_args(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += ' ';
        out += argv[i];
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        out.push_back(std::stod(item));
    }
    return out;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    out << text << '\n';
}

struct EstimateOptions {
    std::string input;
    std::string schema;
    std::string estimators = "classical";
    std::string prior_moments = "x";
    std::string out;
    bool partial = false;
    bool no_timing = false;
    int boot = 999;
    double level = 0.95;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

// Teacher-level estimation pipeline for one estimator id; rebuilt from the
// raw rows on every call so bootstrap draws rerun partialling and prior
// fitting.
LinearEstimate run_unit_estimator(LinearEstimatorId id, const ObservationSet& raw,
                                  bool partial, PriorMomentSource prior_src) {
    const ObservationSet* data = &raw;
    std::optional<ObservationSet> partialled;
    if (partial) {
        partialled = partial_out(raw);
        data = &*partialled;
    }
    switch (id) {
        case LinearEstimatorId::classical:
            return classical_eiv(sample_moments(*data));
        case LinearEstimatorId::naive_ols:
            return naive_ols(sample_moments(*data));
        case LinearEstimatorId::shrinkage: {
            const GaussianPrior prior = fit_gaussian_prior(sample_moments(*data), prior_src);
            const auto pm = linear_shrinkage(*data, prior);
            LinearEstimate e = regress_on_shrinkage(*data, pm);
            e.prior = prior;
            return e;
        }
        case LinearEstimatorId::weighted_classical:
            return weighted_classical_eiv(*data, data->weight());
        case LinearEstimatorId::weighted_shrinkage: {
            const GaussianPrior prior =
                fit_gaussian_prior(weighted_moments(*data, data->weight()), prior_src);
            const auto pm = linear_shrinkage(*data, prior);
            LinearEstimate e = weighted_regress_on_shrinkage(*data, pm, data->weight());
            e.prior = prior;
            return e;
        }
        default:
            throw DataError("estimator " + to_string(id) + " is not unit-level");
    }
}

LinearEstimate run_grouped_estimator(LinearEstimatorId id, const GroupedData& grouped,
                                     bool partial) {
    switch (id) {
        case LinearEstimatorId::loo_iv:
            return loo_iv(grouped);
        case LinearEstimatorId::debiased_moment:
            return debiased_moment(grouped);
        case LinearEstimatorId::two_sided: {
            ObservationSet agg = aggregate(grouped);
            const std::vector<double> cov12 = estimate_cov12(grouped);
            if (partial && agg.has_covariates()) {
                const std::vector<double> w = agg.weight();
                ObservationSet partialled = partial_out(agg);
                return two_sided_corrected(partialled, w, cov12);
            }
            return two_sided_corrected(agg, agg.weight(), cov12);
        }
        default:
            throw DataError("estimator " + to_string(id) + " is not group-level");
    }
}

bool is_grouped_estimator(LinearEstimatorId id) {
    return id == LinearEstimatorId::loo_iv || id == LinearEstimatorId::debiased_moment ||
           id == LinearEstimatorId::two_sided;
}

int cmd_estimate(const EstimateOptions& opt, const std::string& command) {
    const auto start = std::chrono::steady_clock::now();
    const ColumnMap schema = ColumnMap::parse(opt.schema);
    const PriorMomentSource prior_src = opt.prior_moments == "y"
                                            ? PriorMomentSource::y_moments
                                            : PriorMomentSource::x_moments;
    if (opt.prior_moments != "x" && opt.prior_moments != "y") {
        throw DataError("--prior-moments must be x or y");
    }

    std::optional<GroupedData> grouped;
    std::optional<ObservationSet> units;
    if (!schema.group.empty()) {
        grouped = load_grouped(opt.input, schema);
        units = aggregate(*grouped);
    } else {
        units = load_observations(opt.input, schema);
    }
    if (opt.partial && !units->has_covariates()) {
        throw DataError("--partial-out requires z= columns in the schema");
    }

    RunReport report;
    report.command = command;
    report.input_digest = file_digest(opt.input);

    for (const std::string& name : split_list(opt.estimators)) {
        const LinearEstimatorId id = linear_estimator_from_string(name);
        EstimateEntry entry;
        if (is_grouped_estimator(id)) {
            if (!grouped) {
                throw DataError("estimator '" + name +
                                "' needs grouped data (add group= to the schema)");
            }
            entry.estimate = run_grouped_estimator(id, *grouped, opt.partial);
            if (opt.seed) {
                entry.bootstrap = bootstrap(
                    *grouped,
                    [id, &opt](const GroupedData& g) {
                        return run_grouped_estimator(id, g, opt.partial).beta;
                    },
                    opt.boot, *opt.seed, opt.level, opt.threads);
            }
        } else {
            entry.estimate = run_unit_estimator(id, *units, opt.partial, prior_src);
            if (opt.seed) {
                entry.bootstrap = bootstrap(
                    *units,
                    [id, &opt, prior_src](const ObservationSet& d) {
                        return run_unit_estimator(id, d, opt.partial, prior_src).beta;
                    },
                    opt.boot, *opt.seed, opt.level, opt.threads);
            }
        }
        report.estimates.push_back(std::move(entry));
    }

    if (!opt.no_timing) {
        report.timing_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    }
    write_output(opt.out, report.to_json().dump(2));
    return 0;
}

struct DiagnoseOptions {
    std::string input;
    std::string schema;
    std::string out;
    bool no_timing = false;
    int boot = 999;
    std::uint64_t seed = 0;
    int threads = 1;
};

int cmd_diagnose(const DiagnoseOptions& opt, const std::string& command) {
    const auto start = std::chrono::steady_clock::now();
    const ColumnMap schema = ColumnMap::parse(opt.schema);
    ObservationSet data = schema.group.empty()
                              ? load_observations(opt.input, schema)
                              : aggregate(load_grouped(opt.input, schema));

    DiagnosticConfig config;
    config.bootstrap_B = opt.boot;
    config.seed = opt.seed;
    config.threads = opt.threads;

    RunReport report;
    report.command = command;
    report.input_digest = file_digest(opt.input);
    report.diagnostics = diagnose_precision(data, config);
    if (!opt.no_timing) {
        report.timing_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    }
    write_output(opt.out, report.to_json().dump(2));
    return 0;
}

struct SimulateOptions {
    std::string mode;
    std::string spec_path;
    std::string calibrate_path;
    std::string schema;
    std::string out_prefix = "latreg_sim";
    std::string estimators;
    std::string grid = "lists";
    std::string bmu_list;
    std::string bsig_list;
    std::string quantile_list = "0.75";
    std::string effect_list = "1";
    int reps = 0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> n;
    int threads = 1;
    int npmle_grid = 150;
    double npmle_tol = 1e-7;
    int npmle_maxiter = 1000;
};

int cmd_simulate(const SimulateOptions& opt) {
    DgpSpec base;
    if (!opt.spec_path.empty()) {
        std::ifstream in(opt.spec_path);
        if (!in) {
            throw DataError("cannot open spec file: " + opt.spec_path);
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("/: spec is not valid JSON: ") + e.what());
        }
        base = DgpSpec::from_json(j);
    } else if (!opt.calibrate_path.empty()) {
        const ColumnMap schema = ColumnMap::parse(opt.schema);
        base = calibrate_dgp(load_observations(opt.calibrate_path, schema));
    } else {
        throw DataError("simulate needs --spec or --calibrate");
    }
    if (opt.n) base.n = *opt.n;
    base.seed = opt.seed;

    McSummary summary;
    if (opt.mode == "linear") {
        base.mode = base.is_linear() ? base.mode : std::variant<LinearDgp, NonlinearDgp>(LinearDgp{});
        std::vector<DgpSpec> cells;
        if (opt.grid == "default") {
            cells = default_linear_grid(base);
        } else if (opt.grid != "lists") {
            throw DataError("--grid must be 'default' or 'lists'");
        } else {
            const std::vector<double> bmus =
                opt.bmu_list.empty() ? std::vector<double>{0.2} : split_doubles(opt.bmu_list);
            const std::vector<double> bsigs =
                opt.bsig_list.empty() ? std::vector<double>{0.1} : split_doubles(opt.bsig_list);
            for (double bm : bmus) {
                for (double bs : bsigs) {
                    cells.push_back(with_scaled_coefficients(base, bm, bs));
                }
            }
        }
        const auto estimators = standard_linear_mc_estimators(
            split_list(opt.estimators.empty() ? "classical,shrinkage" : opt.estimators));
        summary = run_monte_carlo_linear(cells, estimators, opt.reps, opt.seed, opt.threads);
    } else if (opt.mode == "nonlinear") {
        std::vector<DgpSpec> cells;
        for (double q : split_doubles(opt.quantile_list)) {
            for (double eff : split_doubles(opt.effect_list)) {
                DgpSpec cell = base;
                NonlinearDgp m;
                m.quantile = q;
                m.effect = eff;
                cell.mode = m;
                cell.validate();
                cells.push_back(std::move(cell));
            }
        }
        NpmleConfig npmle;
        npmle.grid_size = opt.npmle_grid;
        npmle.tol = opt.npmle_tol;
        npmle.max_iter = opt.npmle_maxiter;
        const auto estimators = standard_nonlinear_mc_estimators(
            split_list(opt.estimators.empty() ? "oracle,npeb,plugin" : opt.estimators),
            npmle);
        summary =
            run_monte_carlo_nonlinear(cells, estimators, opt.reps, opt.seed, opt.threads);
    } else {
        throw DataError("--mode must be linear or nonlinear");
    }

    summary.write_summary_csv(opt.out_prefix + "_summary.csv");
    if (opt.mode == "nonlinear") {
        summary.write_density_csv(opt.out_prefix + "_density.csv");
    }
    {
        std::ofstream out(opt.out_prefix + "_spec.json");
        if (!out) {
            throw DataError("cannot write file: " + opt.out_prefix + "_spec.json");
        }
        out << base.to_json().dump(2) << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    const std::string command = join_args(argc, argv);
    CLI::App app{"Regression on noisy latent attributes: measurement-error-corrected "
                 "and shrinkage estimators, NPMLE posterior means, bootstrap inference, "
                 "precision diagnostics, and a Monte Carlo engine"};
    app.require_subcommand(1);

    EstimateOptions eopt;
    CLI::App* est = app.add_subcommand("estimate", "Run estimators on a CSV dataset");
    est->add_option("--input", eopt.input, "input CSV")->required();
    est->add_option("--schema", eopt.schema,
                    "column mapping y=COL,x=COL,sigma=COL[,weight=COL][,z=A+B][,group=COL]")
        ->required();
    est->add_option("--estimators", eopt.estimators,
                    "comma list: classical,shrinkage,weighted_classical,weighted_shrinkage,"
                    "two_sided,loo_iv,debiased_moment,naive_ols");
    est->add_flag("--partial-out", eopt.partial, "residualize y,x on the z columns first");
    est->add_option("--prior-moments", eopt.prior_moments,
                    "prior hyperparameters from x or y moments (default x)");
    est->add_option("--boot", eopt.boot, "bootstrap replications (default 999)");
    est->add_option("--seed", eopt.seed, "RNG seed; omitting it disables the bootstrap");
    est->add_option("--level", eopt.level, "CI level (default 0.95)");
    est->add_option("--threads", eopt.threads, "worker threads (output independent of N)");
    est->add_option("--out", eopt.out, "report path (default stdout)");
    est->add_flag("--no-timing", eopt.no_timing, "omit timing from the report");

    DiagnoseOptions dopt;
    CLI::App* diag = app.add_subcommand("diagnose", "Precision-independence diagnostics");
    diag->add_option("--input", dopt.input, "input CSV")->required();
    diag->add_option("--schema", dopt.schema, "column mapping")->required();
    diag->add_option("--boot", dopt.boot, "bootstrap replications (default 999)");
    diag->add_option("--seed", dopt.seed, "RNG seed")->required();
    diag->add_option("--threads", dopt.threads, "worker threads");
    diag->add_option("--out", dopt.out, "report path (default stdout)");
    diag->add_flag("--no-timing", dopt.no_timing, "omit timing from the report");

    SimulateOptions sopt;
    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo comparisons");
    sim->add_option("--mode", sopt.mode, "linear | nonlinear")->required();
    sim->add_option("--spec", sopt.spec_path, "DgpSpec JSON file");
    sim->add_option("--calibrate", sopt.calibrate_path, "calibrate the DGP from this CSV");
    sim->add_option("--schema", sopt.schema, "column mapping for --calibrate");
    sim->add_option("--reps", sopt.reps, "replications per cell")->required();
    sim->add_option("--seed", sopt.seed, "RNG seed")->required();
    sim->add_option("--n", sopt.n, "sample size per replication (default: spec n)");
    sim->add_option("--grid", sopt.grid,
                    "default (the 11x7 scaled-coefficient lattice) or lists "
                    "(cross product of --bmu x --bsig)");
    sim->add_option("--bmu", sopt.bmu_list, "scaled beta_mu values, comma list");
    sim->add_option("--bsig", sopt.bsig_list, "scaled beta_sigma values, comma list");
    sim->add_option("--quantile", sopt.quantile_list, "threshold quantiles, comma list");
    sim->add_option("--effect", sopt.effect_list, "normalized effects, comma list");
    sim->add_option("--estimators", sopt.estimators, "estimator names, comma list");
    sim->add_option("--npmle-grid", sopt.npmle_grid, "NPMLE atoms for npeb (default 150)");
    sim->add_option("--npmle-tol", sopt.npmle_tol, "NPMLE tolerance (default 1e-7)");
    sim->add_option("--npmle-maxiter", sopt.npmle_maxiter, "NPMLE max iterations");
    sim->add_option("--threads", sopt.threads, "worker threads (output independent of N)");
    sim->add_option("--out-prefix", sopt.out_prefix,
                    "output prefix for _summary.csv, _density.csv, _spec.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        std::cout << latreg::error_json("input", e.what()).dump(2) << '\n';
        return 2;
    }

    try {
        if (est->parsed()) return cmd_estimate(eopt, command);
        if (diag->parsed()) return cmd_diagnose(dopt, command);
        if (sim->parsed()) return cmd_simulate(sopt);
        std::cout << latreg::error_json("input", "no subcommand").dump(2) << '\n';
        return 2;
    } catch (const latreg::BootstrapError& e) {
        std::cout << latreg::error_json("bootstrap", e.what()).dump(2) << '\n';
        return 4;
    } catch (const latreg::EstimatorError& e) {
        std::cout << latreg::error_json("estimator", e.what()).dump(2) << '\n';
        return 3;
    } catch (const latreg::DataError& e) {
        std::cout << latreg::error_json("input", e.what()).dump(2) << '\n';
        return 2;
    }
}
