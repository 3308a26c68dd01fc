#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rerand/rerand.hpp"

namespace {

using nlohmann::json;

std::string utc_timestamp() {
    const std::time_t t =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t entropy_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
}

struct SampleOptions {
    std::string covariates_path;
    std::string header = "auto";
    int n1 = 0;
    std::string method = "lgr";
    double p_accept = 0.01;
    std::uint64_t seed = 0;
    double delta = 0.5;
    double eta = 1.0;
    long max_iters = 100000;
    long arr_max_draws = 100000;
    long psrr_max_sweeps = 10000;
    std::string out = "assignment.csv";
    CLI::Option* seed_opt = nullptr;
};

struct StudyOptions {
    rerand::StudyConfig cfg;
    std::vector<std::string> method_names{"cr", "arr", "psrr", "lgr"};
    std::vector<double> deltas{0.01, 0.1, 0.5, 1.0, 10.0};
    std::vector<double> etas{0.01, 0.1, 1.0, 10.0};
    std::string out;
    CLI::Option* seed_opt = nullptr;
};

/// The config file lives on the root app so one INI file can hold a section
/// per subcommand; fallthrough lets --config appear after the command name.
void enable_config_section(CLI::App* sub) {
    sub->fallthrough();
}

void register_study_options(CLI::App* sub, StudyOptions& s) {
    sub->add_option("--n", s.cfg.n, "number of units")->capture_default_str();
    sub->add_option("--n1", s.cfg.n1, "treated-arm size (0 means n/2)")
        ->capture_default_str();
    sub->add_option("--p-accept", s.cfg.p_accept, "balance acceptance probability")
        ->capture_default_str();
    sub->add_option("--dims", s.cfg.dims, "covariate dimensions to sweep")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_option("--methods", s.method_names, "samplers to run")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_option("--reps", s.cfg.reps, "Monte Carlo replications per cell")
        ->capture_default_str();
    sub->add_option("--frt-reps", s.cfg.frt_reps,
                    "reference draws per randomization test")
        ->capture_default_str();
    sub->add_option("--alpha", s.cfg.alpha, "test level")->capture_default_str();
    sub->add_option("--tau", s.cfg.tau, "true treatment effect")
        ->capture_default_str();
    sub->add_option("--noise-sd", s.cfg.noise_sd, "outcome noise SD")
        ->capture_default_str();
    sub->add_option("--delta", s.cfg.lgr.delta, "Langevin temperature")
        ->capture_default_str();
    sub->add_option("--eta", s.cfg.lgr.eta, "Langevin learning rate")
        ->capture_default_str();
    sub->add_option("--max-iters", s.cfg.lgr.max_iters, "Langevin iteration budget")
        ->capture_default_str();
    sub->add_option("--arr-max-draws", s.cfg.arr_max_draws,
                    "acceptance-rejection draw budget")
        ->capture_default_str();
    sub->add_option("--psrr-max-sweeps", s.cfg.psrr_max_sweeps,
                    "pair-switching sweep budget")
        ->capture_default_str();
    sub->add_option("--workers", s.cfg.workers, "worker threads (0 means hardware)")
        ->capture_default_str();
    s.seed_opt = sub->add_option("--seed", s.cfg.master_seed,
                                 "master seed (omitted: drawn from system entropy)");
    sub->add_option("--out", s.out, "output CSV path")->capture_default_str();
    enable_config_section(sub);
}

json study_config_json(const StudyOptions& s) {
    const rerand::StudyConfig& c = s.cfg;
    json j;
    j["n"] = c.n;
    j["n1"] = c.n1 > 0 ? c.n1 : c.n / 2;
    j["p_accept"] = c.p_accept;
    j["dims"] = c.dims;
    j["methods"] = s.method_names;
    j["reps"] = c.reps;
    j["frt_reps"] = c.frt_reps;
    j["alpha"] = c.alpha;
    j["tau"] = c.tau;
    j["noise_sd"] = c.noise_sd;
    j["delta"] = c.lgr.delta;
    j["eta"] = c.lgr.eta;
    j["max_iters"] = c.lgr.max_iters;
    j["arr_max_draws"] = c.arr_max_draws;
    j["psrr_max_sweeps"] = c.psrr_max_sweeps;
    j["workers"] = c.workers;
    j["master_seed"] = c.master_seed;
    return j;
}

void write_manifest(const std::string& command, const std::string& out_path,
                    std::uint64_t master_seed, const json& config, const json& extra,
                    const std::string& started) {
    json m;
    m["command"] = command;
    m["version"] = rerand::kVersion;
    m["master_seed"] = master_seed;
    m["config"] = config;
    m["started_utc"] = started;
    m["finished_utc"] = utc_timestamp();
    m["outputs"] = json::array({out_path});
    if (!extra.is_null()) m["extra"] = extra;
    rerand::write_text_file_atomic(out_path + ".manifest.json", m.dump(2) + "\n");
}

void log_cell(const rerand::CellResult& c) {
    std::string line = std::string("cell method=") + rerand::method_name(c.method) +
                       " d=" + std::to_string(c.d);
    if (c.delta) line += " delta=" + rerand::format_double(*c.delta);
    if (c.eta) line += " eta=" + rerand::format_double(*c.eta);
    if (c.mean_time_s) line += " mean_time_s=" + rerand::format_double(*c.mean_time_s);
    if (c.bias) line += " bias=" + rerand::format_double(*c.bias);
    if (c.sd_tau) line += " sd_tau=" + rerand::format_double(*c.sd_tau);
    if (c.coverage) line += " coverage=" + rerand::format_double(*c.coverage);
    if (c.power) line += " power=" + rerand::format_double(*c.power);
    if (c.censored_reps > 0) line += " censored=" + std::to_string(c.censored_reps);
    std::fprintf(stderr, "%s\n", line.c_str());
}

void warn_censored(const rerand::ExperimentReport& report) {
    long total = 0;
    for (const auto& c : report.cells) total += c.censored_reps;
    if (total > 0) {
        std::fprintf(stderr,
                     "warning: %ld replications exhausted sampler budgets and were "
                     "censored; see the censored_reps column\n",
                     total);
    }
}

using StudyRunner = std::function<rerand::ExperimentReport(
    const rerand::StudyConfig&, const rerand::CellCallback&)>;

void run_study(const std::string& command, StudyOptions& s, const StudyRunner& runner,
               bool with_hyper, const json& extra_config = json()) {
    if (!s.seed_opt || s.seed_opt->count() == 0) s.cfg.master_seed = entropy_seed();
    s.cfg.methods.clear();
    for (const std::string& name : s.method_names) {
        s.cfg.methods.push_back(rerand::method_from_name(name));
    }
    const std::string started = utc_timestamp();
    const rerand::ExperimentReport report = runner(s.cfg, log_cell);
    warn_censored(report);
    rerand::write_text_file_atomic(s.out, rerand::results_csv_string(report, with_hyper));
    json config = study_config_json(s);
    if (!extra_config.is_null()) config.update(extra_config);
    write_manifest(command, s.out, s.cfg.master_seed, config, json(), started);
    std::fprintf(stderr, "results written to %s\n", s.out.c_str());
}

void run_sample(SampleOptions& s) {
    if (!s.seed_opt || s.seed_opt->count() == 0) s.seed = entropy_seed();
    const std::string started = utc_timestamp();
    const rerand::CsvHeader header_mode = s.header == "skip" ? rerand::CsvHeader::skip
                                          : s.header == "data"
                                              ? rerand::CsvHeader::data
                                              : rerand::CsvHeader::detect;
    rerand::CovariateMatrix x =
        rerand::read_covariates_csv(s.covariates_path, header_mode);
    const long n = x.units();
    const long d = x.dims();
    const rerand::DesignContext ctx =
        rerand::build_design_context(std::move(x), s.n1, s.p_accept);

    rerand::SamplerSpec spec;
    spec.method = rerand::method_from_name(s.method);
    spec.lgr = rerand::LgrConfig{s.delta, s.eta, s.max_iters};
    spec.arr_max_draws = s.arr_max_draws;
    spec.psrr_max_sweeps = s.psrr_max_sweeps;

    rerand::RngStream rng(s.seed);
    const rerand::BalanceDraw draw = rerand::draw_assignment(ctx, spec, rng);
    rerand::write_text_file_atomic(s.out,
                                   rerand::assignment_csv_string(draw.assignment));

    json config;
    config["covariates"] = s.covariates_path;
    config["header"] = s.header;
    config["n1"] = s.n1;
    config["method"] = s.method;
    config["p_accept"] = s.p_accept;
    config["delta"] = s.delta;
    config["eta"] = s.eta;
    config["max_iters"] = s.max_iters;
    config["arr_max_draws"] = s.arr_max_draws;
    config["psrr_max_sweeps"] = s.psrr_max_sweeps;
    config["master_seed"] = s.seed;
    json extra;
    extra["n"] = n;
    extra["d"] = d;
    extra["m_value"] = draw.m_value;
    extra["threshold_a"] = ctx.threshold_a;
    extra["iterations"] = draw.iterations;
    extra["elapsed_seconds"] = draw.elapsed_seconds;
    write_manifest("sample", s.out, s.seed, config, extra, started);
    std::fprintf(stderr, "assignment written to %s (M = %s, a = %s, iterations = %ld)\n",
                 s.out.c_str(), rerand::format_double(draw.m_value).c_str(),
                 rerand::format_double(ctx.threshold_a).c_str(), draw.iterations);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rerandomization toolkit: balanced treatment assignment via "
                 "Langevin-gradient, acceptance-rejection and pair-switching "
                 "samplers, with randomization inference and Monte Carlo studies"};
    app.set_version_flag("--version", rerand::kVersion);
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "INI config file; the section named after the invoked "
                   "command applies, other sections are for other commands");
    app.config_formatter(std::make_shared<CLI::ConfigINI>());
    app.allow_config_extras(CLI::config_extras_mode::error);

    SampleOptions sample;
    CLI::App* sample_sub = app.add_subcommand(
        "sample", "Draw one balanced assignment for a covariate CSV");
    sample_sub->add_option("--covariates", sample.covariates_path,
                           "input CSV, n rows x d numeric columns, optional header")
        ->required();
    sample_sub
        ->add_option("--header", sample.header,
                     "first CSV row: auto (detect), skip, or data")
        ->transform(CLI::IsMember({"auto", "skip", "data"}, CLI::ignore_case))
        ->capture_default_str();
    sample_sub->add_option("--n1", sample.n1, "treated-arm size")->required();
    sample_sub->add_option("--method", sample.method, "sampler: cr, arr, psrr or lgr")
        ->capture_default_str();
    sample_sub
        ->add_option("--p-accept", sample.p_accept, "balance acceptance probability")
        ->capture_default_str();
    sample_sub->add_option("--delta", sample.delta, "Langevin temperature")
        ->capture_default_str();
    sample_sub->add_option("--eta", sample.eta, "Langevin learning rate")
        ->capture_default_str();
    sample_sub->add_option("--max-iters", sample.max_iters, "Langevin iteration budget")
        ->capture_default_str();
    sample_sub
        ->add_option("--arr-max-draws", sample.arr_max_draws,
                     "acceptance-rejection draw budget")
        ->capture_default_str();
    sample_sub
        ->add_option("--psrr-max-sweeps", sample.psrr_max_sweeps,
                     "pair-switching sweep budget")
        ->capture_default_str();
    sample.seed_opt = sample_sub->add_option(
        "--seed", sample.seed, "master seed (omitted: drawn from system entropy)");
    sample_sub->add_option("--out", sample.out, "output CSV path")
        ->capture_default_str();
    enable_config_section(sample_sub);
    sample_sub->callback([&sample] { run_sample(sample); });

    StudyOptions bench;
    bench.out = "benchmark.csv";
    CLI::App* bench_sub = app.add_subcommand(
        "benchmark", "Time balanced-assignment generation per (method, d)");
    register_study_options(bench_sub, bench);
    bench_sub->callback([&bench] {
        run_study("benchmark", bench,
                  [](const rerand::StudyConfig& cfg, const rerand::CellCallback& cb) {
                      return rerand::run_timing_study(cfg, cb);
                  },
                  false);
    });

    StudyOptions estimate;
    estimate.out = "estimation.csv";
    CLI::App* estimate_sub = app.add_subcommand(
        "estimate", "Bias/SD of the difference-in-means estimator per (method, d)");
    register_study_options(estimate_sub, estimate);
    estimate_sub->callback([&estimate] {
        run_study("estimate", estimate,
                  [](const rerand::StudyConfig& cfg, const rerand::CellCallback& cb) {
                      return rerand::run_estimation_study(cfg, cb);
                  },
                  false);
    });

    StudyOptions infer;
    infer.out = "inference.csv";
    infer.method_names = {"cr", "lgr"};
    CLI::App* infer_sub = app.add_subcommand(
        "infer", "Coverage and power of randomization inference per (method, d)");
    register_study_options(infer_sub, infer);
    infer_sub->callback([&infer] {
        run_study("infer", infer,
                  [](const rerand::StudyConfig& cfg, const rerand::CellCallback& cb) {
                      return rerand::run_inference_study(cfg, cb);
                  },
                  false);
    });

    StudyOptions sens;
    sens.out = "sensitivity.csv";
    sens.method_names = {"lgr"};
    CLI::App* sens_sub = app.add_subcommand(
        "sensitivity", "Langevin hyperparameter sweep (temperature and learning rate)");
    register_study_options(sens_sub, sens);
    sens_sub->add_option("--deltas", sens.deltas, "temperatures, learning rate held at 1")
        ->delimiter(',')
        ->capture_default_str();
    sens_sub->add_option("--etas", sens.etas, "learning rates, temperature held at 0.5")
        ->delimiter(',')
        ->capture_default_str();
    sens_sub->callback([&sens] {
        sens.method_names = {"lgr"};
        json extra;
        extra["deltas"] = sens.deltas;
        extra["etas"] = sens.etas;
        run_study("sensitivity", sens,
                  [&sens](const rerand::StudyConfig& cfg,
                          const rerand::CellCallback& cb) {
                      return rerand::sensitivity_sweep(cfg, sens.deltas, sens.etas, cb);
                  },
                  true, extra);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const rerand::BudgetError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const rerand::NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const rerand::InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
