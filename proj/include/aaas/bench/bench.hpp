#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aaas/client/client.hpp"
#include "aaas/riskcore/analysis.hpp"

// Benchmark harness internals: corpus file IO, result digests, timed local
// and remote runs, and the CSV report shapes the CLI prints.

namespace aaas::bench {

// ---- corpus files ---------------------------------------------------------
// On disk a corpus is: yet.bin ("YET1" magic + yet blob), one elt-NN.bin per
// ELT ("ELT1" magic + single-table elt blob, NN zero-padded from 00), and
// portfolio.json.

struct Corpus {
    risk::YearEventTable yet;
    risk::EltStore elts;
    risk::Portfolio portfolio;
};

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

// Reads yet.bin, elt-00.bin.. until the next index is missing, and
// portfolio.json, then validates the whole set. Throws IoError on file
// problems, MalformedBlob / ValidationError on content problems.
Corpus load_corpus(const std::filesystem::path& dir);

// ylt.csv: header "trial_id,loss", then one row per trial with the loss
// printed to round-trip precision.
void write_ylt_csv(const std::filesystem::path& file, const risk::YearLossTable& ylt);
risk::YearLossTable load_ylt_csv(const std::filesystem::path& file);

// ---- digests --------------------------------------------------------------

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

// Digest of the full analysis output: every layer's YLT as little-endian
// float64 bytes, layers in (program, layer) order.
std::uint64_t ylt_digest(const risk::AnalysisResult& result);

std::string digest_hex(std::uint64_t digest);  // 16 lowercase hex digits

// ---- timed runs -----------------------------------------------------------

struct PhaseSample {
    double transfer_in_s = 0.0;
    double kernel_s = 0.0;
    double transfer_out_s = 0.0;

    double total_s() const { return transfer_in_s + kernel_s + transfer_out_s; }
};

struct RunReport {
    std::string mode;        // "local" or "remote"
    std::size_t devices = 0; // 0 for local runs
    unsigned lanes = 1;
    std::size_t chunk_size = 1;
    std::vector<PhaseSample> samples;  // one per repeat
    std::uint64_t digest = 0;
    std::string error;  // sweep only: a non-empty value marks a failed cell

    double mean_total_s() const;
    double stddev_total_s() const;  // sample formula (n - 1); 0 for one repeat
};

// Runs analyze() `repeats` times; local runs have no transfer phases. The
// digest must come out identical on every repeat (determinism invariant) or
// the run aborts. `last_result` receives the final repeat's output.
RunReport run_local(const Corpus& corpus, unsigned lanes, std::size_t chunk_size,
                    std::size_t repeats, risk::AnalysisResult* last_result = nullptr);

RunReport run_remote(const Corpus& corpus, const std::vector<client::DeviceEndpoint>& devices,
                     unsigned lanes, std::size_t chunk_size, std::size_t repeats,
                     const client::ClientOptions& opts = client::default_client_options(),
                     risk::AnalysisResult* last_result = nullptr);

// One remote report per (lanes, devices) pair, using the first `devices`
// entries of `servers`. A failing cell records its error and the sweep
// continues.
std::vector<RunReport> sweep(const Corpus& corpus, const std::vector<unsigned>& lanes_list,
                             const std::vector<std::size_t>& devices_list,
                             const std::vector<client::DeviceEndpoint>& servers,
                             std::size_t chunk_size, std::size_t repeats,
                             const client::ClientOptions& opts = client::default_client_options());

// ---- CSV shapes -----------------------------------------------------------

inline constexpr const char* kReportHeader =
    "mode,devices,lanes,chunk,repeat,transfer_in_s,kernel_s,transfer_out_s,total_s,digest";

// One row per recorded repeat; failed sweep cells emit a single row with
// empty timings and FAILED:<reason> in the digest column.
std::string report_csv(const std::vector<RunReport>& reports);

// Rows of metric,parameter,value for each requested return period (pml) and
// tail level (tvar).
std::string metrics_csv(const risk::YearLossTable& ylt, const std::vector<double>& return_periods,
                        const std::vector<double>& tvar_alphas);

}  // namespace aaas::bench
