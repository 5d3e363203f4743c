#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aaas/bench/bench.hpp"
#include "aaas/client/client.hpp"
#include "aaas/datagen/datagen.hpp"

// Benchmark driver: generates corpora, runs the analysis locally or against
// remote compute servers, sweeps (lanes x devices) grids, and derives risk
// metrics from a saved YLT. Reports are CSV on stdout unless --report-file
// is given; human-readable progress goes to stderr.
//
// run-local writes digest.txt next to the corpus as the correctness
// reference; run-remote and sweep compare against it when present and exit
// nonzero on mismatch.

namespace fs = std::filesystem;
using namespace aaas;

namespace {

std::string trimmed(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, const char* flag) {
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string item = trimmed(comma == std::string::npos ? text.substr(start)
                                                              : text.substr(start, comma - start));
        if (item.empty())
            throw std::runtime_error(std::string(flag) + " wants a comma-separated list of values");
        items.push_back(std::move(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return items;
}

std::vector<double> parse_doubles(const std::string& text, const char* flag) {
    std::vector<double> out;
    for (const std::string& item : split_list(text, flag)) {
        char* end = nullptr;
        double v = std::strtod(item.c_str(), &end);
        if (end != item.c_str() + item.size())
            throw std::runtime_error(std::string(flag) + ": '" + item + "' is not a number");
        out.push_back(v);
    }
    return out;
}

template <typename T>
std::vector<T> parse_counts(const std::string& text, const char* flag) {
    std::vector<T> out;
    for (const std::string& item : split_list(text, flag)) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(item.c_str(), &end, 10);
        if (end != item.c_str() + item.size())
            throw std::runtime_error(std::string(flag) + ": '" + item + "' is not a count");
        out.push_back(static_cast<T>(v));
    }
    return out;
}

std::vector<client::DeviceEndpoint> resolve_servers(const std::string& flag_value) {
    std::vector<client::DeviceEndpoint> servers = flag_value.empty()
                                                      ? client::discover_devices()
                                                      : client::discover_devices(flag_value.c_str());
    if (servers.empty())
        throw std::runtime_error("no servers: pass --servers HOST:PORT[,...] or set AAAS_SERVERS");
    return servers;
}

void emit_report(const std::string& csv, const std::string& report_file) {
    if (report_file.empty()) {
        std::fputs(csv.c_str(), stdout);
        return;
    }
    std::ofstream out(report_file, std::ios::trunc);
    out << csv;
    if (!out) throw std::runtime_error("cannot write report file '" + report_file + "'");
}

void write_run_outputs(const fs::path& data, const risk::AnalysisResult& result) {
    if (!result.layers.empty()) bench::write_ylt_csv(data / "ylt.csv", result.layers.front().ylt);
}

std::optional<std::string> read_reference(const fs::path& data) {
    std::ifstream in(data / "digest.txt");
    if (!in) return std::nullopt;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return trimmed(text);
}

// exit 1 when a reference digest exists and disagrees, 0 otherwise
int check_reference(const fs::path& data, std::uint64_t digest) {
    std::optional<std::string> want = read_reference(data);
    if (!want) {
        std::fprintf(stderr, "digest %s (no reference digest.txt to compare)\n",
                     bench::digest_hex(digest).c_str());
        return 0;
    }
    if (*want == bench::digest_hex(digest)) {
        std::fprintf(stderr, "digest %s matches reference\n", bench::digest_hex(digest).c_str());
        return 0;
    }
    std::fprintf(stderr, "digest mismatch: got %s, reference is %s\n",
                 bench::digest_hex(digest).c_str(), want->c_str());
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk analysis benchmark driver"};
    app.require_subcommand(1);

    // generate
    datagen::GenSpec spec;
    std::string out_dir = ".";
    unsigned mean_events = 0;
    CLI::App* gen = app.add_subcommand("generate", "Write a synthetic corpus to a directory");
    gen->add_option("--out", out_dir, "Output directory")->capture_default_str();
    gen->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
    gen->add_option("--trials", spec.n_trials, "Trials in the year event table")
        ->capture_default_str();
    CLI::Option* ev_opt =
        gen->add_option("--events", mean_events, "Mean events per trial; sets the range [m/2, 3m/2]");
    CLI::Option* ev_min = gen->add_option("--min-events", spec.events_min, "Events range low end")
                              ->capture_default_str();
    CLI::Option* ev_max = gen->add_option("--max-events", spec.events_max, "Events range high end")
                              ->capture_default_str();
    ev_opt->excludes(ev_min)->excludes(ev_max);
    gen->add_option("--catalog", spec.catalog_size, "Event catalog size")->capture_default_str();
    gen->add_option("--elts", spec.n_elts, "Number of event loss tables")->capture_default_str();
    gen->add_option("--density", spec.elt_density, "Catalog coverage probability per table")
        ->capture_default_str();

    // shared run flags
    std::string data = ".";
    std::string servers_flag;
    std::string report_file;
    unsigned lanes = 1;
    std::size_t chunk = 1024;
    std::size_t repeats = 5;

    auto add_run_flags = [&](CLI::App* cmd, bool remote) {
        cmd->add_option("--data", data, "Corpus directory")->capture_default_str();
        cmd->add_option("--lanes", lanes, "Concurrent lanes per launch")->capture_default_str();
        cmd->add_option("--chunk", chunk, "Events staged per chunk")->capture_default_str();
        cmd->add_option("--repeats", repeats, "Timing repeats")->capture_default_str();
        cmd->add_option("--report-file", report_file, "Write the CSV report here (default stdout)");
        if (remote)
            cmd->add_option("--servers", servers_flag,
                            "HOST:PORT[,HOST:PORT...] (default $AAAS_SERVERS)");
    };

    CLI::App* run_local = app.add_subcommand("run-local", "Time the analysis in-process");
    add_run_flags(run_local, false);

    CLI::App* run_remote = app.add_subcommand("run-remote", "Time the analysis on remote servers");
    add_run_flags(run_remote, true);

    std::string lanes_list_flag, devices_list_flag;
    CLI::App* sweep = app.add_subcommand("sweep", "Run a (lanes x devices) grid of remote runs");
    add_run_flags(sweep, true);
    sweep->add_option("--lanes-list", lanes_list_flag, "Comma-separated lanes values")->required();
    sweep->add_option("--devices-list", devices_list_flag, "Comma-separated device counts")
        ->required();

    std::string ylt_file = "ylt.csv";
    std::string rp_flag = "5,10,25,50,100";
    std::string alpha_flag = "0.9,0.95,0.99";
    CLI::App* metrics = app.add_subcommand("metrics", "Derive risk metrics from a saved YLT");
    metrics->add_option("--ylt", ylt_file, "YLT CSV file")->capture_default_str();
    metrics->add_option("--return-periods", rp_flag, "Return periods for PML")
        ->capture_default_str();
    metrics->add_option("--tvar-alphas", alpha_flag, "Tail levels for TVaR")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            if (ev_opt->count() > 0) {
                spec.events_min = mean_events - mean_events / 2;
                spec.events_max = mean_events + mean_events / 2;
            }
            datagen::validate(spec);
            fs::create_directories(out_dir);
            bench::Corpus corpus{datagen::gen_yet(spec), datagen::gen_elts(spec),
                                 datagen::gen_portfolio(spec)};
            bench::write_corpus(out_dir, corpus);
            std::fprintf(stderr,
                         "wrote corpus to %s: %zu trials, events %u..%u, catalog %u, %zu elts\n",
                         out_dir.c_str(), corpus.yet.trials.size(), spec.events_min,
                         spec.events_max, spec.catalog_size, corpus.elts.size());
            return 0;
        }

        if (run_local->parsed()) {
            bench::Corpus corpus = bench::load_corpus(data);
            risk::AnalysisResult result;
            bench::RunReport rep = bench::run_local(corpus, lanes, chunk, repeats, &result);
            write_run_outputs(data, result);
            std::ofstream ref(fs::path(data) / "digest.txt", std::ios::trunc);
            ref << bench::digest_hex(rep.digest) << "\n";
            if (!ref) throw std::runtime_error("cannot write digest.txt");
            emit_report(bench::report_csv({rep}), report_file);
            std::fprintf(stderr, "digest %s  mean %.6fs  stddev %.6fs  (reference saved)\n",
                         bench::digest_hex(rep.digest).c_str(), rep.mean_total_s(),
                         rep.stddev_total_s());
            return 0;
        }

        if (run_remote->parsed()) {
            bench::Corpus corpus = bench::load_corpus(data);
            std::vector<client::DeviceEndpoint> servers = resolve_servers(servers_flag);
            risk::AnalysisResult result;
            bench::RunReport rep = bench::run_remote(corpus, servers, lanes, chunk, repeats,
                                                     client::default_client_options(), &result);
            write_run_outputs(data, result);
            emit_report(bench::report_csv({rep}), report_file);
            std::fprintf(stderr, "%zu device(s)  mean %.6fs  stddev %.6fs\n", rep.devices,
                         rep.mean_total_s(), rep.stddev_total_s());
            return check_reference(data, rep.digest);
        }

        if (sweep->parsed()) {
            bench::Corpus corpus = bench::load_corpus(data);
            std::vector<client::DeviceEndpoint> servers = resolve_servers(servers_flag);
            std::vector<unsigned> lanes_list = parse_counts<unsigned>(lanes_list_flag, "--lanes-list");
            std::vector<std::size_t> devices_list =
                parse_counts<std::size_t>(devices_list_flag, "--devices-list");

            std::vector<bench::RunReport> grid =
                bench::sweep(corpus, lanes_list, devices_list, servers, chunk, repeats);
            emit_report(bench::report_csv(grid), report_file);

            int rc = 0;
            std::optional<std::uint64_t> first_digest;
            for (const bench::RunReport& cell : grid) {
                if (!cell.error.empty()) {
                    std::fprintf(stderr, "cell lanes=%u devices=%zu failed: %s\n", cell.lanes,
                                 cell.devices, cell.error.c_str());
                    rc = 1;
                    continue;
                }
                if (!first_digest) first_digest = cell.digest;
                if (cell.digest != *first_digest) {
                    std::fprintf(stderr, "cell lanes=%u devices=%zu digest differs\n", cell.lanes,
                                 cell.devices);
                    rc = 1;
                }
            }
            if (first_digest && check_reference(data, *first_digest) != 0) rc = 1;
            return rc;
        }

        if (metrics->parsed()) {
            risk::YearLossTable ylt = bench::load_ylt_csv(ylt_file);
            std::fputs(bench::metrics_csv(ylt, parse_doubles(rp_flag, "--return-periods"),
                                          parse_doubles(alpha_flag, "--tvar-alphas"))
                           .c_str(),
                       stdout);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
