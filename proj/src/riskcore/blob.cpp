#include "aaas/riskcore/blob.hpp"

#include <limits>

#include "aaas/common/byteio.hpp"

namespace aaas::risk {

std::vector<std::uint8_t> encode_yet(const YearEventTable& yet) {
    std::vector<std::uint8_t> out;
    const std::size_t n = yet.trials.size();
    std::size_t total = 4 + 8 + 8 * n;
    for (const Trial& t : yet.trials) total += 4 + 12 * t.occurrences.size();
    out.reserve(total);

    put_u32le(out, yet.catalog_size);
    put_u64le(out, static_cast<std::uint64_t>(n));
    std::uint64_t offset = 4 + 8 + 8 * static_cast<std::uint64_t>(n);
    for (const Trial& t : yet.trials) {
        put_u64le(out, offset);
        offset += 4 + 12 * static_cast<std::uint64_t>(t.occurrences.size());
    }
    for (const Trial& t : yet.trials) {
        put_u32le(out, static_cast<std::uint32_t>(t.occurrences.size()));
        for (const EventOccurrence& occ : t.occurrences) {
            put_u32le(out, occ.event_id);
            put_f64le(out, occ.timestamp);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_elts(const EltStore& elts) {
    std::vector<std::uint8_t> out;
    std::size_t total = 4;
    for (const EventLossTable& elt : elts) total += 4 + 16 + 8 * elt.losses.size();
    out.reserve(total);

    put_u32le(out, static_cast<std::uint32_t>(elts.size()));
    for (const EventLossTable& elt : elts) {
        put_u32le(out, elt.catalog_size);
        put_f64le(out, elt.terms.retention);
        put_f64le(out, elt.terms.limit);
        for (double l : elt.losses) put_f64le(out, l);
    }
    return out;
}

std::vector<std::uint8_t> encode_layer(const Layer& layer) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 32);
    put_u32le(out, static_cast<std::uint32_t>(layer.elt_ids.size()));
    put_f64le(out, layer.terms.occ_retention);
    put_f64le(out, layer.terms.occ_limit);
    put_f64le(out, layer.terms.agg_retention);
    put_f64le(out, layer.terms.agg_limit);
    return out;
}

YearEventTable decode_yet(std::span<const std::uint8_t> blob) {
    ByteReader r(blob);
    YearEventTable yet;
    yet.catalog_size = r.u32("yet catalog_size");
    std::uint64_t n_trials = r.u64("yet n_trials");
    // Bound counts by what the blob could physically hold before any
    // allocation, so hostile headers cannot demand huge buffers.
    if (n_trials > blob.size() / 8)
        throw MalformedBlob("yet trial count larger than blob", 4);
    std::vector<std::uint64_t> offsets(n_trials);
    for (std::uint64_t i = 0; i < n_trials; ++i) offsets[i] = r.u64("yet offset");

    yet.trials.resize(n_trials);
    for (std::uint64_t i = 0; i < n_trials; ++i) {
        if (offsets[i] != r.offset())
            throw MalformedBlob("yet trial offset does not match record position", r.offset());
        std::uint32_t n_events = r.u32("trial n_events");
        if (n_events > r.remaining() / 12)
            throw MalformedBlob("trial event count larger than blob", r.offset());
        Trial& trial = yet.trials[i];
        trial.occurrences.resize(n_events);
        for (std::uint32_t e = 0; e < n_events; ++e) {
            trial.occurrences[e].event_id = r.u32("event id");
            trial.occurrences[e].timestamp = r.f64("event timestamp");
        }
    }
    if (r.remaining() != 0) throw MalformedBlob("trailing bytes after yet records", r.offset());
    return yet;
}

EltStore decode_elts(std::span<const std::uint8_t> blob) {
    ByteReader r(blob);
    std::uint32_t n_elts = r.u32("elt count");
    EltStore elts(n_elts);
    for (std::uint32_t i = 0; i < n_elts; ++i) {
        EventLossTable& elt = elts[i];
        elt.catalog_size = r.u32("elt catalog_size");
        elt.terms.retention = r.f64("elt retention");
        elt.terms.limit = r.f64("elt limit");
        if (elt.catalog_size > r.remaining() / 8)
            throw MalformedBlob("elt catalog size larger than blob", r.offset());
        elt.losses.resize(elt.catalog_size);
        for (std::uint32_t k = 0; k < elt.catalog_size; ++k) elt.losses[k] = r.f64("elt loss");
    }
    if (r.remaining() != 0) throw MalformedBlob("trailing bytes after elt records", r.offset());
    return elts;
}

TableBlobs encode_tables(const YearEventTable& yet, const EltStore& elts, const Layer& layer) {
    EltStore covered;
    covered.reserve(layer.elt_ids.size());
    for (std::size_t id : layer.elt_ids) {
        if (id >= elts.size())
            throw ValidationError("layer references ELT " + std::to_string(id) +
                                  " outside store of size " + std::to_string(elts.size()));
        covered.push_back(elts[id]);
    }
    Layer canonical;
    canonical.terms = layer.terms;
    canonical.elt_ids.resize(covered.size());
    for (std::size_t i = 0; i < covered.size(); ++i) canonical.elt_ids[i] = i;

    TableBlobs blobs;
    blobs.yet = encode_yet(yet);
    blobs.elt = encode_elts(covered);
    blobs.layer = encode_layer(canonical);
    return blobs;
}

DecodedTables decode_tables(std::span<const std::uint8_t> yet_blob,
                            std::span<const std::uint8_t> elt_blob,
                            std::span<const std::uint8_t> layer_blob) {
    DecodedTables tables;
    tables.yet = decode_yet(yet_blob);
    tables.elts = decode_elts(elt_blob);

    ByteReader r(layer_blob);
    std::uint32_t n_covered = r.u32("layer n_elts_covered");
    tables.layer.terms.occ_retention = r.f64("layer occ_ret");
    tables.layer.terms.occ_limit = r.f64("layer occ_lim");
    tables.layer.terms.agg_retention = r.f64("layer agg_ret");
    tables.layer.terms.agg_limit = r.f64("layer agg_lim");
    if (r.remaining() != 0) throw MalformedBlob("trailing bytes after layer record", r.offset());

    if (n_covered != tables.elts.size())
        throw MalformedBlob("layer covers " + std::to_string(n_covered) + " ELTs but blob holds " +
                                std::to_string(tables.elts.size()),
                            0);
    for (std::size_t i = 0; i < tables.elts.size(); ++i)
        if (tables.elts[i].catalog_size != tables.yet.catalog_size)
            throw MalformedBlob("ELT " + std::to_string(i) + " catalog size disagrees with YET", 0);

    tables.layer.elt_ids.resize(tables.elts.size());
    for (std::size_t i = 0; i < tables.elts.size(); ++i) tables.layer.elt_ids[i] = i;
    return tables;
}

}  // namespace aaas::risk
