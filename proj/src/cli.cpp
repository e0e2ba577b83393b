#include "p2p2g/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "p2p2g/report.hpp"

namespace p2p2g {

namespace {

struct RunArgs {
    std::string case_path;
    std::string mode = "admm";
    std::string out;
    std::optional<double> rho;
    std::optional<double> alpha;
    std::optional<int> scenarios;
    std::optional<int> max_iters;
    std::optional<double> threshold;
    std::uint64_t seed = 1;
    int samples = 100;
    bool no_doe = false;
    bool no_p2p = false;
};

std::string default_out(const std::string& fallback)
{
    if (const char* env = std::getenv(kOutEnv); env != nullptr && *env != '\0') {
        return env;
    }
    return fallback;
}

int do_run(const RunArgs& a, std::ostream& out, std::ostream& err)
{
    CaseConfig cfg;
    try {
        cfg = load_case_file(a.case_path);
    } catch (const std::exception& e) {
        err << "error: " << a.case_path << ": " << e.what() << '\n';
        return kExitError;
    }
    Mode mode;
    try {
        mode = parse_mode(a.mode);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
    MarketParams& m = cfg.market;
    if (a.rho) {
        m.rho = *a.rho;
    }
    if (a.alpha) {
        m.alpha = *a.alpha;
    }
    if (a.scenarios) {
        m.scenarios = *a.scenarios;
    }
    if (a.max_iters) {
        m.max_iters = *a.max_iters;
    }
    if (a.threshold) {
        m.thresholds = Thresholds{*a.threshold, *a.threshold, *a.threshold, *a.threshold};
    }
    try {
        validate_market(m, cfg.horizon());
    } catch (const std::exception& e) {
        err << "error: " << a.case_path << ": " << e.what() << '\n';
        return kExitError;
    }

    RunOptions opt;
    opt.doe = !a.no_doe;
    opt.p2p = !a.no_p2p;
    opt.seed = a.seed;
    opt.samples = a.samples;
    const std::filesystem::path dir = a.out.empty() ? default_out("out") : a.out;
    try {
        const ClearingResult res = run_clearing(cfg, mode, opt);
        write_run(dir, cfg, res, a.case_path, opt);
        out << to_string(mode) << (res.converged ? " converged" : " stopped") << " after " << res.iterations
            << " iterations, objective " << res.objective << ", messages " << res.messages_sent << " sent / "
            << res.messages_censored << " censored, violations " << res.integrity.voltage_violations << ", output "
            << dir.string() << '\n';
        if (!res.converged) {
            err << "warning: " << a.case_path << ": max_iters " << m.max_iters << " reached without convergence\n";
            return kExitMaxIters;
        }
    } catch (const std::exception& e) {
        err << "error: " << a.case_path << ": " << e.what() << '\n';
        return kExitError;
    }
    return kExitConverged;
}

int do_compare(const std::string& a, const std::string& b, const std::string& csv, std::ostream& out,
               std::ostream& err)
{
    try {
        const std::vector<CompareRow> rows = compare_runs(a, b);
        write_compare_text(out, rows);
        if (!csv.empty()) {
            std::ofstream f(csv);
            if (!f) {
                err << "error: cannot write " << csv << '\n';
                return kExitError;
            }
            write_compare_csv(f, rows);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitConverged;
}

int do_validate(const std::string& path, std::ostream& out, std::ostream& err)
{
    try {
        const CaseConfig cfg = load_case_file(path);
        out << path << ": ok, " << cfg.network.nodes.size() << " nodes, " << cfg.network.lines.size() << " lines, "
            << cfg.num_prosumers() << " prosumers, horizon " << cfg.horizon() << ", hash " << config_hash(cfg)
            << '\n';
    } catch (const std::exception& e) {
        err << "error: " << path << ": " << e.what() << '\n';
        return kExitError;
    }
    return kExitConverged;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"P2P2G market clearing with dynamic operating envelopes", "p2p2g"};
    app.require_subcommand(1);

    RunArgs ra;
    CLI::App* run = app.add_subcommand("run", "Clear a case and write run artifacts");
    run->add_option("--case", ra.case_path, "Case JSON")->required();
    run->add_option("--mode", ra.mode, "admm or coca")->capture_default_str();
    run->add_option("--out", ra.out, std::string("Output directory (default $") + kOutEnv + " or ./out)");
    run->add_option("--rho", ra.rho, "ADMM penalty");
    run->add_option("--alpha", ra.alpha, "Censoring scale");
    run->add_option("--scenarios", ra.scenarios, "Network linearization scenarios S");
    run->add_option("--max-iters", ra.max_iters, "Iteration cap");
    run->add_option("--threshold", ra.threshold, "All four convergence thresholds");
    run->add_option("--seed", ra.seed, "Seed for integrity sampling")->capture_default_str();
    run->add_option("--samples", ra.samples, "Dominated integrity samples")->capture_default_str();
    run->add_flag("--no-doe", ra.no_doe, "Fixed export limits, no DSO loop");
    run->add_flag("--no-p2p", ra.no_p2p, "Drop all peer trades");

    std::string cmp_a;
    std::string cmp_b;
    std::string cmp_csv;
    CLI::App* compare = app.add_subcommand("compare", "Compare two run directories");
    compare->add_option("a", cmp_a, "First run directory")->required();
    compare->add_option("b", cmp_b, "Second run directory")->required();
    compare->add_option("--csv", cmp_csv, "Also write the metrics table as CSV");

    std::string val_path;
    CLI::App* val = app.add_subcommand("validate", "Load and check a case file");
    val->add_option("case", val_path, "Case JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitConverged;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }

    if (run->parsed()) {
        return do_run(ra, out, err);
    }
    if (compare->parsed()) {
        return do_compare(cmp_a, cmp_b, cmp_csv, out, err);
    }
    return do_validate(val_path, out, err);
}

}  // namespace p2p2g
