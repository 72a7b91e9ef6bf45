#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "infoneat/errors.hpp"
#include "infoneat/genome.hpp"  // little-endian stream helpers
#include "infoneat/sbox.hpp"

namespace infoneat {

// Side-channel trace matrix plus per-trace metadata. Fixed-key sets carry a
// single key byte; variable-key sets one byte per trace. `ids` track row
// provenance across shuffles and subset selections (in-memory only).
struct TraceSet {
    std::vector<float> traces;  // row-major n x f
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> plaintexts;
    std::vector<std::uint8_t> keys;  // size 1 (fixed key) or n
    int n = 0;
    int f = 0;
    int m = 0;
    bool scaled = false;
    std::string source;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> ids;

    std::span<const float> row(int i) const {
        return {traces.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(f),
                static_cast<std::size_t>(f)};
    }
    std::span<float> row(int i) {
        return {traces.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(f),
                static_cast<std::size_t>(f)};
    }
    std::uint8_t key_of(int i) const { return keys.size() == 1 ? keys[0] : keys[static_cast<std::size_t>(i)]; }
    bool fixed_key() const { return keys.size() == 1; }

    void validate() const {
        if (n < 0 || f <= 0 || m <= 0) throw FormatError("trace set: bad shape");
        if (traces.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(f) ||
            labels.size() != static_cast<std::size_t>(n) ||
            plaintexts.size() != static_cast<std::size_t>(n) ||
            (keys.size() != 1 && keys.size() != static_cast<std::size_t>(n))) {
            throw FormatError("trace set: inconsistent field sizes");
        }
        for (std::uint8_t l : labels) {
            if (l >= m) throw FormatError("trace set: label >= class count");
        }
        if (scaled) {
            for (float v : traces) {
                if (!(v >= 0.0f && v <= 1.0f)) {
                    throw FormatError("trace set: scaled flag set but features leave [0,1]");
                }
            }
        }
    }

    TraceSet select(std::span<const int> rows) const {
        TraceSet out;
        out.f = f;
        out.m = m;
        out.scaled = scaled;
        out.source = source;
        out.seed = seed;
        out.n = static_cast<int>(rows.size());
        out.keys = fixed_key() ? keys : std::vector<std::uint8_t>{};
        out.traces.reserve(static_cast<std::size_t>(out.n) * static_cast<std::size_t>(f));
        for (int r : rows) {
            const auto src = row(r);
            out.traces.insert(out.traces.end(), src.begin(), src.end());
            out.labels.push_back(labels[static_cast<std::size_t>(r)]);
            out.plaintexts.push_back(plaintexts[static_cast<std::size_t>(r)]);
            if (!fixed_key()) out.keys.push_back(keys[static_cast<std::size_t>(r)]);
            out.ids.push_back(ids.empty() ? static_cast<std::uint32_t>(r)
                                          : ids[static_cast<std::size_t>(r)]);
        }
        return out;
    }
};

// Desk-scale synthetic leakage: the ID model with Hamming-weight deposits on
// a configurable set of informative sample points.
struct SynthSpec {
    int n_classes = 16;
    int n_per_class = 150;
    int n_features = 32;
    std::vector<int> informative_indices = {12, 13, 14, 15, 16, 17, 18, 19};
    double noise_sigma = 0.08;
    int desync_window = 0;
    std::uint8_t key = 0x0B;
    std::vector<std::uint8_t> sbox;  // empty -> default table for n_classes

    void validate() const {
        if (n_classes < 2 || n_features < 1 || n_per_class < 1) {
            throw InputError("synth spec: bad shape");
        }
        if (!(noise_sigma >= 0.0)) throw InputError("synth spec: negative noise");
        for (int idx : informative_indices) {
            if (idx < 0 || idx >= n_features) throw InputError("synth spec: informative index out of range");
        }
        if (desync_window < 0 || desync_window >= n_features / 2) {
            throw InputError("synth spec: desync window must lie in [0, f/2)");
        }
        if (key >= n_classes) throw InputError("synth spec: key outside class space");
    }

    std::vector<std::uint8_t> resolved_sbox() const {
        std::vector<std::uint8_t> table = sbox.empty() ? default_sbox(n_classes) : sbox;
        if (static_cast<int>(table.size()) != n_classes) {
            throw InputError("synth spec: substitution table size != class count");
        }
        validate_permutation(table);
        return table;
    }
};

// Uniform plaintexts, label = sbox(p XOR key); informative columns carry
// HW(label)/HW_max plus Gaussian noise, other columns pure noise. A positive
// desync window applies a per-trace circular shift drawn from [0, window].
inline TraceSet synth_traces(const SynthSpec& spec, int n_total, std::mt19937_64& rng) {
    spec.validate();
    const std::vector<std::uint8_t> table = spec.resolved_sbox();
    const double hw_max = static_cast<double>(hamming_weight_max(spec.n_classes));

    TraceSet set;
    set.n = n_total;
    set.f = spec.n_features;
    set.m = spec.n_classes;
    set.keys = {spec.key};
    set.source = "synthetic";
    set.traces.resize(static_cast<std::size_t>(n_total) * static_cast<std::size_t>(spec.n_features));
    set.labels.resize(static_cast<std::size_t>(n_total));
    set.plaintexts.resize(static_cast<std::size_t>(n_total));
    set.ids.resize(static_cast<std::size_t>(n_total));

    std::uniform_int_distribution<int> plaintext_dist(0, spec.n_classes - 1);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    std::vector<bool> informative(static_cast<std::size_t>(spec.n_features), false);
    for (int idx : spec.informative_indices) informative[static_cast<std::size_t>(idx)] = true;

    std::vector<float> scratch(static_cast<std::size_t>(spec.n_features));
    for (int i = 0; i < n_total; ++i) {
        const int p = plaintext_dist(rng);
        const std::uint8_t label = table[static_cast<std::size_t>(p ^ spec.key)];
        set.plaintexts[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(p);
        set.labels[static_cast<std::size_t>(i)] = label;
        set.ids[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
        const double signal = hamming_weight(label) / hw_max;
        for (int c = 0; c < spec.n_features; ++c) {
            const double base = informative[static_cast<std::size_t>(c)] ? signal : 0.5;
            scratch[static_cast<std::size_t>(c)] = static_cast<float>(base + noise(rng));
        }
        int shift = 0;
        if (spec.desync_window > 0) {
            std::uniform_int_distribution<int> jitter(0, spec.desync_window);
            shift = jitter(rng);
        }
        auto dst = set.row(i);
        for (int c = 0; c < spec.n_features; ++c) {
            dst[static_cast<std::size_t>((c + shift) % spec.n_features)] =
                scratch[static_cast<std::size_t>(c)];
        }
    }
    return set;
}

// Circular-shift jitter applied to an existing set (hiding-countermeasure
// analog used by robustness checks).
inline TraceSet desync_traces(const TraceSet& set, int window, std::mt19937_64& rng) {
    if (window < 0 || window >= set.f) throw InputError("desync: window out of range");
    TraceSet out = set;
    out.scaled = false;  // shifted features may leave the fitted range downstream
    std::uniform_int_distribution<int> jitter(0, window);
    std::vector<float> scratch(static_cast<std::size_t>(set.f));
    for (int i = 0; i < set.n; ++i) {
        const int shift = jitter(rng);
        const auto src = set.row(i);
        std::copy(src.begin(), src.end(), scratch.begin());
        auto dst = out.row(i);
        for (int c = 0; c < set.f; ++c) {
            dst[static_cast<std::size_t>((c + shift) % set.f)] = scratch[static_cast<std::size_t>(c)];
        }
    }
    out.scaled = set.scaled && window == 0;
    return out;
}

inline std::map<int, std::vector<int>> rows_by_class(const TraceSet& set) {
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < set.n; ++i) by_class[set.labels[static_cast<std::size_t>(i)]].push_back(i);
    return by_class;
}

// Random undersampling: every class truncated to the scarcest class count
// (or the explicit cap when smaller). Classes keep their original row order.
inline TraceSet undersample_balance(const TraceSet& set, std::optional<int> per_class_cap = {}) {
    const auto by_class = rows_by_class(set);
    if (static_cast<int>(by_class.size()) != set.m) {
        throw InputError("undersample_balance: a class has no traces");
    }
    std::size_t target = std::numeric_limits<std::size_t>::max();
    for (const auto& [cls, rows] : by_class) target = std::min(target, rows.size());
    if (per_class_cap) target = std::min(target, static_cast<std::size_t>(*per_class_cap));
    if (target == 0) throw InputError("undersample_balance: empty class");

    std::vector<int> keep;
    for (const auto& [cls, rows] : by_class) {
        keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(target));
    }
    std::sort(keep.begin(), keep.end());
    return set.select(keep);
}

// Per-feature min/max statistics fitted on training data; the only statistics
// ever applied to attack traces.
struct FeatureScaling {
    std::vector<float> min;
    std::vector<float> max;
};

struct ScaledTraceSet {
    TraceSet set;
    FeatureScaling stats;
};

inline ScaledTraceSet scale_features(const TraceSet& set) {
    if (set.scaled) throw InputError("scale_features: set already scaled");
    if (set.n == 0) throw InputError("scale_features: empty set");
    ScaledTraceSet out{set, {}};
    out.stats.min.assign(static_cast<std::size_t>(set.f), std::numeric_limits<float>::infinity());
    out.stats.max.assign(static_cast<std::size_t>(set.f), -std::numeric_limits<float>::infinity());
    for (int i = 0; i < set.n; ++i) {
        const auto r = set.row(i);
        for (int c = 0; c < set.f; ++c) {
            out.stats.min[static_cast<std::size_t>(c)] =
                std::min(out.stats.min[static_cast<std::size_t>(c)], r[static_cast<std::size_t>(c)]);
            out.stats.max[static_cast<std::size_t>(c)] =
                std::max(out.stats.max[static_cast<std::size_t>(c)], r[static_cast<std::size_t>(c)]);
        }
    }
    for (int i = 0; i < set.n; ++i) {
        auto r = out.set.row(i);
        for (int c = 0; c < set.f; ++c) {
            const float lo = out.stats.min[static_cast<std::size_t>(c)];
            const float hi = out.stats.max[static_cast<std::size_t>(c)];
            // Constant features map to 0.
            r[static_cast<std::size_t>(c)] =
                hi > lo ? (r[static_cast<std::size_t>(c)] - lo) / (hi - lo) : 0.0f;
        }
    }
    out.set.scaled = true;
    return out;
}

// Applies training statistics to another set; out-of-range values are clamped
// into [0,1] and counted.
inline TraceSet scale_apply(const TraceSet& set, const FeatureScaling& stats,
                            std::size_t* clamped_count = nullptr) {
    if (static_cast<int>(stats.min.size()) != set.f) {
        throw InputError("scale_apply: statistics width mismatch");
    }
    TraceSet out = set;
    std::size_t clamped = 0;
    for (int i = 0; i < set.n; ++i) {
        auto r = out.row(i);
        for (int c = 0; c < set.f; ++c) {
            const float lo = stats.min[static_cast<std::size_t>(c)];
            const float hi = stats.max[static_cast<std::size_t>(c)];
            float v = hi > lo ? (r[static_cast<std::size_t>(c)] - lo) / (hi - lo) : 0.0f;
            if (v < 0.0f || v > 1.0f) {
                ++clamped;
                v = std::clamp(v, 0.0f, 1.0f);
            }
            r[static_cast<std::size_t>(c)] = v;
        }
    }
    if (clamped_count) *clamped_count = clamped;
    out.scaled = true;
    return out;
}

inline std::vector<int> random_permutation(int n, std::mt19937_64& rng) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

inline TraceSet apply_permutation(const TraceSet& set, std::span<const int> perm) {
    if (static_cast<int>(perm.size()) != set.n) throw InputError("permutation length mismatch");
    return set.select(perm);
}

inline TraceSet shuffle(const TraceSet& set, std::mt19937_64& rng) {
    const std::vector<int> perm = random_permutation(set.n, rng);
    return apply_permutation(set, perm);
}

// Stratified k-fold split: per class, shuffle then deal round-robin, so fold
// class counts differ by at most one trace.
inline std::vector<TraceSet> kfold_split(const TraceSet& set, int k, std::mt19937_64& rng) {
    if (k < 2) throw InputError("kfold_split: k must be >= 2");
    auto by_class = rows_by_class(set);
    for (const auto& [cls, rows] : by_class) {
        if (static_cast<int>(rows.size()) < k) {
            throw InputError("kfold_split: class " + std::to_string(cls) + " has fewer than k traces");
        }
    }
    std::vector<std::vector<int>> fold_rows(static_cast<std::size_t>(k));
    for (auto& [cls, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            fold_rows[i % static_cast<std::size_t>(k)].push_back(rows[i]);
        }
    }
    std::vector<TraceSet> folds;
    folds.reserve(static_cast<std::size_t>(k));
    for (auto& rows : fold_rows) {
        std::sort(rows.begin(), rows.end());
        folds.push_back(set.select(rows));
    }
    return folds;
}

inline TraceSet concat(std::span<const TraceSet> parts) {
    if (parts.empty()) throw InputError("concat: nothing to join");
    TraceSet out = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const TraceSet& p = parts[i];
        if (p.f != out.f || p.m != out.m || p.scaled != out.scaled) {
            throw InputError("concat: incompatible trace sets");
        }
        if (out.fixed_key() != p.fixed_key() || (out.fixed_key() && out.keys[0] != p.keys[0])) {
            throw InputError("concat: key layout mismatch");
        }
        out.traces.insert(out.traces.end(), p.traces.begin(), p.traces.end());
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        out.plaintexts.insert(out.plaintexts.end(), p.plaintexts.begin(), p.plaintexts.end());
        if (!out.fixed_key()) out.keys.insert(out.keys.end(), p.keys.begin(), p.keys.end());
        out.ids.insert(out.ids.end(), p.ids.begin(), p.ids.end());
        out.n += p.n;
    }
    return out;
}

// --- native container ---------------------------------------------------
//
// Little-endian layout, in order:
//   magic "INTRACE1" | u32 version | u32 n | u32 f | u32 m | u8 scaled |
//   u8 key_mode (0 fixed / 1 per-trace) | u64 seed | u32 tag_len | tag bytes |
//   labels u8[n] | plaintexts u8[n] | key bytes (1 or n) | traces f32[n*f] row-major

namespace detail {

constexpr char traceset_magic[8] = {'I', 'N', 'T', 'R', 'A', 'C', 'E', '1'};
constexpr std::uint32_t traceset_version = 1;

inline void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_le(out, bits);
}

}  // namespace detail

inline void write_traceset(std::ostream& out, const TraceSet& set) {
    set.validate();
    out.write(detail::traceset_magic, sizeof(detail::traceset_magic));
    detail::write_le(out, detail::traceset_version);
    detail::write_le(out, static_cast<std::uint32_t>(set.n));
    detail::write_le(out, static_cast<std::uint32_t>(set.f));
    detail::write_le(out, static_cast<std::uint32_t>(set.m));
    detail::write_le(out, static_cast<std::uint8_t>(set.scaled ? 1 : 0));
    detail::write_le(out, static_cast<std::uint8_t>(set.fixed_key() ? 0 : 1));
    detail::write_le(out, set.seed);
    detail::write_le(out, static_cast<std::uint32_t>(set.source.size()));
    out.write(set.source.data(), static_cast<std::streamsize>(set.source.size()));
    out.write(reinterpret_cast<const char*>(set.labels.data()),
              static_cast<std::streamsize>(set.labels.size()));
    out.write(reinterpret_cast<const char*>(set.plaintexts.data()),
              static_cast<std::streamsize>(set.plaintexts.size()));
    out.write(reinterpret_cast<const char*>(set.keys.data()),
              static_cast<std::streamsize>(set.keys.size()));
    for (float v : set.traces) detail::write_f32(out, v);
    if (!out) throw IoError("trace set write failed");
}

inline TraceSet read_traceset(std::istream& in) {
    auto offset = [&in]() { return static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())); };
    char magic[sizeof(detail::traceset_magic)];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + sizeof(magic), detail::traceset_magic)) {
        throw FormatError("bad trace-set magic", 0);
    }
    const auto version = detail::read_le<std::uint32_t>(in);
    if (version != detail::traceset_version) {
        throw FormatError("unsupported trace-set version " + std::to_string(version), 8);
    }
    TraceSet set;
    set.n = static_cast<int>(detail::read_le<std::uint32_t>(in));
    set.f = static_cast<int>(detail::read_le<std::uint32_t>(in));
    set.m = static_cast<int>(detail::read_le<std::uint32_t>(in));
    set.scaled = detail::read_le<std::uint8_t>(in) != 0;
    const bool per_trace_keys = detail::read_le<std::uint8_t>(in) != 0;
    set.seed = detail::read_le<std::uint64_t>(in);
    const auto tag_len = detail::read_le<std::uint32_t>(in);
    set.source.resize(tag_len);
    in.read(set.source.data(), tag_len);
    if (!in) throw FormatError("trace set truncated in source tag", offset());

    auto read_bytes = [&](std::vector<std::uint8_t>& dst, std::size_t count, const char* what) {
        dst.resize(count);
        in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(count));
        if (!in) throw FormatError(std::string("trace set truncated in ") + what, offset());
    };
    read_bytes(set.labels, static_cast<std::size_t>(set.n), "labels");
    read_bytes(set.plaintexts, static_cast<std::size_t>(set.n), "plaintexts");
    read_bytes(set.keys, per_trace_keys ? static_cast<std::size_t>(set.n) : 1, "keys");

    set.traces.resize(static_cast<std::size_t>(set.n) * static_cast<std::size_t>(set.f));
    for (float& v : set.traces) {
        const std::uint32_t bits = detail::read_le<std::uint32_t>(in);
        std::memcpy(&v, &bits, sizeof(v));
    }
    in.peek();
    if (!in.eof()) throw FormatError("trailing bytes after trace payload", offset());
    set.ids.resize(static_cast<std::size_t>(set.n));
    std::iota(set.ids.begin(), set.ids.end(), 0u);
    set.validate();
    return set;
}

inline void save_traceset(const std::string& path, const TraceSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_traceset(out, set);
}

// --- CSV ------------------------------------------------------------------
//
// Schema: header `label,plaintext,f0..f{f-1}`, one trace per row. The CSV
// form carries no key or class-count metadata; m is inferred from labels and
// the key defaults to 0 unless supplied.

inline void write_traceset_csv(std::ostream& out, const TraceSet& set) {
    out << "label,plaintext";
    for (int c = 0; c < set.f; ++c) out << ",f" << c;
    out << '\n';
    char buf[48];
    for (int i = 0; i < set.n; ++i) {
        out << static_cast<int>(set.labels[static_cast<std::size_t>(i)]) << ','
            << static_cast<int>(set.plaintexts[static_cast<std::size_t>(i)]);
        for (float v : set.row(i)) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
            out << ',' << buf;
        }
        out << '\n';
    }
}

inline TraceSet read_traceset_csv(std::istream& in, std::uint8_t key = 0) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: empty file");
    std::vector<std::string> header;
    {
        std::istringstream fields(line);
        std::string field;
        while (std::getline(fields, field, ',')) header.push_back(field);
    }
    if (header.size() < 3 || header[0] != "label" || header[1] != "plaintext") {
        throw FormatError("csv: expected header label,plaintext,f0..");
    }
    for (std::size_t i = 2; i < header.size(); ++i) {
        if (header[i] != "f" + std::to_string(i - 2)) {
            throw FormatError("csv: unexpected feature column '" + header[i] + "'");
        }
    }
    TraceSet set;
    set.f = static_cast<int>(header.size() - 2);
    set.keys = {key};
    set.source = "csv";
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string field;
        std::vector<std::string> values;
        while (std::getline(fields, field, ',')) values.push_back(field);
        if (values.size() != header.size()) {
            throw FormatError("csv: row width mismatch at line " + std::to_string(lineno));
        }
        try {
            set.labels.push_back(static_cast<std::uint8_t>(std::stoi(values[0])));
            set.plaintexts.push_back(static_cast<std::uint8_t>(std::stoi(values[1])));
            for (std::size_t i = 2; i < values.size(); ++i) {
                set.traces.push_back(std::stof(values[i]));
            }
        } catch (const std::exception&) {
            throw FormatError("csv: unparsable value at line " + std::to_string(lineno));
        }
        ++set.n;
    }
    int max_label = 0;
    for (std::uint8_t l : set.labels) max_label = std::max(max_label, static_cast<int>(l));
    set.m = max_label + 1;
    set.ids.resize(static_cast<std::size_t>(set.n));
    std::iota(set.ids.begin(), set.ids.end(), 0u);
    set.validate();
    return set;
}

enum class TraceFormat { native, csv, ascad_hdf5 };

inline TraceSet load_traceset(const std::string& path, TraceFormat format = TraceFormat::native);

inline void save_traceset_csv(const std::string& path, const TraceSet& set) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_traceset_csv(out, set);
    if (!out) throw IoError("csv write failed for " + path);
}

}  // namespace infoneat

#ifdef INFONEAT_WITH_HDF5
#include "infoneat/ascad_hdf5.hpp"
#endif

namespace infoneat {

inline TraceSet load_traceset(const std::string& path, TraceFormat format) {
    if (format == TraceFormat::csv) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path);
        return read_traceset_csv(in);
    }
    if (format == TraceFormat::ascad_hdf5) {
#ifdef INFONEAT_WITH_HDF5
        return load_ascad_hdf5(path);
#else
        throw InputError("this build does not include HDF5 support (rebuild with INFONEAT_WITH_HDF5)");
#endif
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_traceset(in);
}

}  // namespace infoneat
