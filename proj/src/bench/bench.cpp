#include "aaas/bench/bench.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "aaas/riskcore/blob.hpp"
#include "aaas/riskcore/metrics.hpp"

namespace aaas::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kYetMagic[4] = {'Y', 'E', 'T', '1'};
constexpr char kEltMagic[4] = {'E', 'L', 'T', '1'};

std::vector<std::uint8_t> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const char magic[4], std::span<const std::uint8_t> body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + p.string());
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(body.data()),
              static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("short write to " + p.string());
}

std::span<const std::uint8_t> strip_magic(const std::vector<std::uint8_t>& data,
                                          const char magic[4], const fs::path& p) {
    if (data.size() < 4 || std::memcmp(data.data(), magic, 4) != 0)
        throw IoError(p.string() + ": bad magic");
    return std::span<const std::uint8_t>(data).subspan(4);
}

std::string elt_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "elt-%02zu.bin", i);
    return buf;
}

json portfolio_to_json(const risk::Portfolio& pf) {
    json programs = json::array();
    for (const risk::Program& program : pf.programs) {
        json layers = json::array();
        for (const risk::Layer& layer : program.layers) {
            layers.push_back({{"elt_ids", layer.elt_ids},
                              {"terms",
                               {{"occ_ret", layer.terms.occ_retention},
                                {"occ_lim", layer.terms.occ_limit},
                                {"agg_ret", layer.terms.agg_retention},
                                {"agg_lim", layer.terms.agg_limit}}}});
        }
        programs.push_back({{"layers", std::move(layers)}});
    }
    return {{"programs", std::move(programs)}};
}

risk::Portfolio portfolio_from_json(const json& j) {
    risk::Portfolio pf;
    for (const json& jp : j.at("programs")) {
        risk::Program program;
        for (const json& jl : jp.at("layers")) {
            risk::Layer layer;
            layer.elt_ids = jl.at("elt_ids").get<std::vector<std::size_t>>();
            const json& t = jl.at("terms");
            layer.terms.occ_retention = t.at("occ_ret").get<double>();
            layer.terms.occ_limit = t.at("occ_lim").get<double>();
            layer.terms.agg_retention = t.at("agg_ret").get<double>();
            layer.terms.agg_limit = t.at("agg_lim").get<double>();
            program.layers.push_back(std::move(layer));
        }
        pf.programs.push_back(std::move(program));
    }
    return pf;
}

std::uint64_t fnv_fold(std::uint64_t h, const std::uint8_t* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

// ---- corpus files ---------------------------------------------------------

void write_corpus(const fs::path& dir, const Corpus& corpus) {
    write_file(dir / "yet.bin", kYetMagic, risk::encode_yet(corpus.yet));
    for (std::size_t i = 0; i < corpus.elts.size(); ++i) {
        risk::EltStore one = {corpus.elts[i]};
        write_file(dir / elt_name(i), kEltMagic, risk::encode_elts(one));
    }
    std::ofstream out(dir / "portfolio.json", std::ios::trunc);
    if (!out) throw IoError("cannot create " + (dir / "portfolio.json").string());
    out << portfolio_to_json(corpus.portfolio).dump(2) << "\n";
    if (!out) throw IoError("short write to " + (dir / "portfolio.json").string());
}

Corpus load_corpus(const fs::path& dir) {
    Corpus corpus;

    std::vector<std::uint8_t> yet_raw = read_file(dir / "yet.bin");
    corpus.yet = risk::decode_yet(strip_magic(yet_raw, kYetMagic, dir / "yet.bin"));

    for (std::size_t i = 0; fs::exists(dir / elt_name(i)); ++i) {
        fs::path p = dir / elt_name(i);
        std::vector<std::uint8_t> raw = read_file(p);
        risk::EltStore one = risk::decode_elts(strip_magic(raw, kEltMagic, p));
        if (one.size() != 1)
            throw IoError(p.string() + ": holds " + std::to_string(one.size()) +
                          " tables, want exactly 1");
        corpus.elts.push_back(std::move(one.front()));
    }

    try {
        corpus.portfolio =
            portfolio_from_json(json::parse(read_file(dir / "portfolio.json")));
    } catch (const json::exception& e) {
        throw IoError((dir / "portfolio.json").string() + ": " + e.what());
    }

    risk::validate(corpus.yet);
    for (const risk::EventLossTable& elt : corpus.elts) risk::validate(elt);
    risk::validate_catalog_agreement(corpus.yet, corpus.elts);
    risk::validate(corpus.portfolio, corpus.elts.size());
    return corpus;
}

void write_ylt_csv(const fs::path& file, const risk::YearLossTable& ylt) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw IoError("cannot create " + file.string());
    out << "trial_id,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < ylt.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, ylt[i]);
        out << buf;
    }
    if (!out) throw IoError("short write to " + file.string());
}

risk::YearLossTable load_ylt_csv(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());

    auto chomp = [](std::string& line) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };

    std::string line;
    if (!std::getline(in, line)) throw IoError(file.string() + ": empty file");
    chomp(line);
    if (line != "trial_id,loss") throw IoError(file.string() + ": unexpected header");

    risk::YearLossTable ylt;
    while (std::getline(in, line)) {
        chomp(line);
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        char* end = nullptr;
        unsigned long long id =
            comma == std::string::npos ? 0 : std::strtoull(line.c_str(), &end, 10);
        if (comma == std::string::npos || end != line.c_str() + comma || id != ylt.size())
            throw IoError(file.string() + ": malformed row " + std::to_string(ylt.size()));
        double loss = std::strtod(line.c_str() + comma + 1, &end);
        if (end != line.c_str() + line.size())
            throw IoError(file.string() + ": malformed loss in row " + std::to_string(ylt.size()));
        ylt.push_back(loss);
    }
    return ylt;
}

// ---- digests --------------------------------------------------------------

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    return fnv_fold(0xcbf29ce484222325ull, bytes.data(), bytes.size());
}

std::uint64_t ylt_digest(const risk::AnalysisResult& result) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const risk::LayerResult& layer : result.layers) {
        for (double v : layer.ylt) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            std::uint8_t b[8];
            for (int k = 0; k < 8; ++k) b[k] = static_cast<std::uint8_t>((bits >> (8 * k)) & 0xFF);
            h = fnv_fold(h, b, 8);
        }
    }
    return h;
}

std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

// ---- timed runs -----------------------------------------------------------

double RunReport::mean_total_s() const {
    if (samples.empty()) return 0.0;
    double sum = 0.0;
    for (const PhaseSample& s : samples) sum += s.total_s();
    return sum / static_cast<double>(samples.size());
}

double RunReport::stddev_total_s() const {
    if (samples.size() < 2) return 0.0;
    const double m = mean_total_s();
    double acc = 0.0;
    for (const PhaseSample& s : samples) {
        double d = s.total_s() - m;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(samples.size() - 1));
}

RunReport run_local(const Corpus& corpus, unsigned lanes, std::size_t chunk_size,
                    std::size_t repeats, risk::AnalysisResult* last_result) {
    if (repeats < 1) throw ValidationError("repeats must be >= 1");
    RunReport rep;
    rep.mode = "local";
    rep.devices = 0;
    rep.lanes = lanes;
    rep.chunk_size = chunk_size;

    for (std::size_t r = 0; r < repeats; ++r) {
        auto start = Clock::now();
        risk::AnalysisResult result =
            risk::analyze(corpus.portfolio, corpus.yet, corpus.elts, lanes, chunk_size);
        PhaseSample sample;
        sample.kernel_s = secs_since(start);
        rep.samples.push_back(sample);

        std::uint64_t d = ylt_digest(result);
        if (r == 0) rep.digest = d;
        else if (d != rep.digest) throw Error("local run digest varied across repeats");
        if (last_result != nullptr && r + 1 == repeats) *last_result = std::move(result);
    }
    return rep;
}

RunReport run_remote(const Corpus& corpus, const std::vector<client::DeviceEndpoint>& devices,
                     unsigned lanes, std::size_t chunk_size, std::size_t repeats,
                     const client::ClientOptions& opts, risk::AnalysisResult* last_result) {
    if (repeats < 1) throw ValidationError("repeats must be >= 1");
    RunReport rep;
    rep.mode = "remote";
    rep.devices = devices.size();
    rep.lanes = lanes;
    rep.chunk_size = chunk_size;

    for (std::size_t r = 0; r < repeats; ++r) {
        client::RemoteRunStats stats;
        risk::AnalysisResult result = client::run_remote_analysis(
            corpus.portfolio, corpus.yet, corpus.elts, devices, lanes, chunk_size, opts, &stats);
        rep.samples.push_back({stats.transfer_in_s, stats.kernel_s, stats.transfer_out_s});

        std::uint64_t d = ylt_digest(result);
        if (r == 0) rep.digest = d;
        else if (d != rep.digest) throw Error("remote run digest varied across repeats");
        if (last_result != nullptr && r + 1 == repeats) *last_result = std::move(result);
    }
    return rep;
}

std::vector<RunReport> sweep(const Corpus& corpus, const std::vector<unsigned>& lanes_list,
                             const std::vector<std::size_t>& devices_list,
                             const std::vector<client::DeviceEndpoint>& servers,
                             std::size_t chunk_size, std::size_t repeats,
                             const client::ClientOptions& opts) {
    if (lanes_list.empty()) throw ValidationError("sweep needs at least one lanes value");
    if (devices_list.empty()) throw ValidationError("sweep needs at least one devices value");

    std::vector<RunReport> out;
    for (unsigned lanes : lanes_list) {
        for (std::size_t d : devices_list) {
            RunReport cell;
            cell.mode = "remote";
            cell.devices = d;
            cell.lanes = lanes;
            cell.chunk_size = chunk_size;
            if (d < 1) {
                cell.error = "devices must be >= 1";
            } else if (d > servers.size()) {
                cell.error = "needs " + std::to_string(d) + " servers, only " +
                             std::to_string(servers.size()) + " configured";
            } else {
                std::vector<client::DeviceEndpoint> subset(servers.begin(),
                                                           servers.begin() + d);
                try {
                    cell = run_remote(corpus, subset, lanes, chunk_size, repeats, opts);
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
            }
            out.push_back(std::move(cell));
        }
    }
    return out;
}

// ---- CSV shapes -----------------------------------------------------------

std::string report_csv(const std::vector<RunReport>& reports) {
    std::string out = std::string(kReportHeader) + "\n";
    char buf[256];
    for (const RunReport& rep : reports) {
        if (!rep.error.empty()) {
            std::string quoted = "FAILED: " + rep.error;
            std::string escaped;
            for (char c : quoted) {
                escaped += c;
                if (c == '"') escaped += '"';  // CSV quote doubling
            }
            std::snprintf(buf, sizeof buf, "%s,%zu,%u,%zu,0,,,,,", rep.mode.c_str(), rep.devices,
                          rep.lanes, rep.chunk_size);
            out += buf;
            out += '"' + escaped + "\"\n";
            continue;
        }
        for (std::size_t i = 0; i < rep.samples.size(); ++i) {
            const PhaseSample& s = rep.samples[i];
            std::snprintf(buf, sizeof buf, "%s,%zu,%u,%zu,%zu,%.9f,%.9f,%.9f,%.9f,%s\n",
                          rep.mode.c_str(), rep.devices, rep.lanes, rep.chunk_size, i,
                          s.transfer_in_s, s.kernel_s, s.transfer_out_s, s.total_s(),
                          digest_hex(rep.digest).c_str());
            out += buf;
        }
    }
    return out;
}

std::string metrics_csv(const risk::YearLossTable& ylt, const std::vector<double>& return_periods,
                        const std::vector<double>& tvar_alphas) {
    std::string out = "metric,parameter,value\n";
    char buf[128];
    for (double rp : return_periods) {
        std::snprintf(buf, sizeof buf, "pml,%g,%.17g\n", rp, risk::pml(ylt, rp));
        out += buf;
    }
    for (double alpha : tvar_alphas) {
        std::snprintf(buf, sizeof buf, "tvar,%g,%.17g\n", alpha, risk::tvar(ylt, alpha));
        out += buf;
    }
    return out;
}

}  // namespace aaas::bench
