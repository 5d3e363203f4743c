#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aaas/riskcore/types.hpp"

// Serialized table images transferred into server-side device buffers.
// All fields little-endian:
//   yet_blob:   u32 catalog_size, u64 n_trials, u64 offsets[n_trials]
//               (absolute byte offset of each trial record), then per trial
//               u32 n_events followed by n_events x (u32 event_id, f64 ts).
//   elt_blob:   u32 n_elts, then per ELT u32 catalog_size, f64 retention,
//               f64 limit, catalog_size x f64 dense losses.
//   layer_blob: u32 n_elts_covered, f64 occ_ret, f64 occ_lim,
//               f64 agg_ret, f64 agg_lim.
//   output:     n_trials x f64.

namespace aaas::risk {

struct TableBlobs {
    std::vector<std::uint8_t> yet;
    std::vector<std::uint8_t> elt;
    std::vector<std::uint8_t> layer;
};

struct DecodedTables {
    YearEventTable yet;
    EltStore elts;
    Layer layer;
};

std::vector<std::uint8_t> encode_yet(const YearEventTable& yet);
std::vector<std::uint8_t> encode_elts(const EltStore& elts);
std::vector<std::uint8_t> encode_layer(const Layer& layer);

YearEventTable decode_yet(std::span<const std::uint8_t> blob);
EltStore decode_elts(std::span<const std::uint8_t> blob);

// Encodes the device image of one layer: ELTs are emitted in elt_ids order
// and the layer is renumbered to cover them as 0..n-1 (canonical form).
TableBlobs encode_tables(const YearEventTable& yet, const EltStore& elts, const Layer& layer);

// Inverse of encode_tables for canonical images. Cross-validates the blobs:
// a catalog-size disagreement between YET and any ELT, or a layer covering a
// different ELT count than the ELT blob, is a MalformedBlob.
DecodedTables decode_tables(std::span<const std::uint8_t> yet_blob,
                            std::span<const std::uint8_t> elt_blob,
                            std::span<const std::uint8_t> layer_blob);

}  // namespace aaas::risk
