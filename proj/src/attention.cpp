#include "rival/attention.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

#include "rival/errors.hpp"
#include "rival/fsutil.hpp"

namespace rival {

const char* to_string(InjectionMode m) {
    switch (m) {
        case InjectionMode::Off: return "off";
        case InjectionMode::Replace: return "replace";
        case InjectionMode::Fuse: return "fuse";
    }
    return "?";
}

InjectionMode injection_mode_from_string(const std::string& s) {
    if (s == "off") return InjectionMode::Off;
    if (s == "replace") return InjectionMode::Replace;
    if (s == "fuse") return InjectionMode::Fuse;
    throw InvalidInputError("unknown injection mode '" + s + "'");
}

InjectionMode policy_mode(int t, const InjectionPolicy& policy) {
    if (!policy.enabled) return InjectionMode::Off;
    if (t > policy.t_align) return InjectionMode::Replace;
    return policy.fusion_enabled ? InjectionMode::Fuse : InjectionMode::Replace;
}

namespace {

// out = a (n x k) * w (k x k), row-major
TokenMatrix project(const TokenMatrix& a, const std::vector<double>& w,
                    int dim) {
    TokenMatrix out(a.rows, dim);
    for (int r = 0; r < a.rows; ++r) {
        const double* ar = a.data.data() + static_cast<std::size_t>(r) * dim;
        double* orow = out.data.data() + static_cast<std::size_t>(r) * dim;
        for (int k = 0; k < dim; ++k) {
            const double av = ar[k];
            if (av == 0.0) continue;
            const double* wrow = w.data() + static_cast<std::size_t>(k) * dim;
            for (int c = 0; c < dim; ++c) orow[c] += av * wrow[c];
        }
    }
    return out;
}

TokenMatrix concat_rows(const TokenMatrix& a, const TokenMatrix& b) {
    TokenMatrix out(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

}  // namespace

AttentionResult injected_attention(const TokenMatrix& v_g,
                                   const TokenMatrix* v_r, InjectionMode mode,
                                   const SiteWeights& w) {
    const int dim = w.dim;
    if (v_g.cols != dim)
        throw ConfigError("injected_attention: token dim " +
                          std::to_string(v_g.cols) +
                          " does not match site dim " + std::to_string(dim));
    if (mode != InjectionMode::Off) {
        if (v_r == nullptr)
            throw ConfigError("injected_attention: mode needs reference tokens");
        if (v_r->cols != dim)
            throw ConfigError("injected_attention: reference token dim " +
                              std::to_string(v_r->cols) +
                              " does not match site dim " +
                              std::to_string(dim));
    }

    // K,V source: generation tokens, reference tokens, or generation-first
    // concatenation. Keys at index >= ref_offset are reference-sourced.
    const TokenMatrix* kv = &v_g;
    TokenMatrix fused;
    int ref_offset = v_g.rows;  // nothing past the end: no reference keys
    if (mode == InjectionMode::Replace) {
        kv = v_r;
        ref_offset = 0;
    } else if (mode == InjectionMode::Fuse) {
        fused = concat_rows(v_g, *v_r);
        kv = &fused;
        ref_offset = v_g.rows;
    }

    const TokenMatrix q = project(v_g, w.wq, dim);
    const TokenMatrix k = project(*kv, w.wk, dim);
    const TokenMatrix v = project(*kv, w.wv, dim);

    const int nq = q.rows;
    const int nk = k.rows;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dim));

    TokenMatrix mixed(nq, dim);
    double ref_mass_total = 0.0;
    std::vector<double> row(nk);
    for (int i = 0; i < nq; ++i) {
        const double* qi = q.data.data() + static_cast<std::size_t>(i) * dim;
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < nk; ++j) {
            const double* kj =
                k.data.data() + static_cast<std::size_t>(j) * dim;
            double dot = 0.0;
            for (int c = 0; c < dim; ++c) dot += qi[c] * kj[c];
            row[j] = dot * inv_sqrt_dk;
            if (row[j] > max_logit) max_logit = row[j];
        }
        double denom = 0.0;
        for (int j = 0; j < nk; ++j) {
            row[j] = std::exp(row[j] - max_logit);
            denom += row[j];
        }
        double ref_mass = 0.0;
        double* out_row =
            mixed.data.data() + static_cast<std::size_t>(i) * dim;
        for (int j = 0; j < nk; ++j) {
            const double weight = row[j] / denom;
            if (j >= ref_offset) ref_mass += weight;
            const double* vj =
                v.data.data() + static_cast<std::size_t>(j) * dim;
            for (int c = 0; c < dim; ++c) out_row[c] += weight * vj[c];
        }
        ref_mass_total += ref_mass;
    }

    AttentionResult res;
    res.tokens = project(mixed, w.wo, dim);
    switch (mode) {
        case InjectionMode::Off: res.score_ref = 0.0; break;
        case InjectionMode::Replace: res.score_ref = 1.0; break;
        case InjectionMode::Fuse:
            res.score_ref = ref_mass_total / static_cast<double>(nq);
            break;
    }
    return res;
}

void HiddenStateCache::capture(const std::string& site, int step,
                               TokenMatrix v) {
    auto key = std::make_pair(site, step);
    if (entries_.count(key))
        throw InvalidInputError("hidden-state cache: duplicate capture for " +
                                site + " step " + std::to_string(step));
    entries_.emplace(std::move(key), std::move(v));
}

const TokenMatrix& HiddenStateCache::lookup(const std::string& site,
                                            int step) const {
    auto it = entries_.find(std::make_pair(site, step));
    if (it == entries_.end())
        throw MissingCacheError("no captured hidden state for site '" + site +
                                "' at step " + std::to_string(step) +
                                " (chain and config out of sync?)");
    return it->second;
}

bool HiddenStateCache::contains(const std::string& site, int step) const {
    return entries_.count(std::make_pair(site, step)) > 0;
}

namespace {

constexpr char kTokenMagic[4] = {'R', 'I', 'V', 'M'};
constexpr std::uint32_t kTokenVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_token_matrix(const std::filesystem::path& path,
                       const TokenMatrix& m) {
    std::string buf;
    buf.reserve(16 + m.data.size() * 8);
    buf.append(kTokenMagic, 4);
    put_u32(buf, kTokenVersion);
    put_u32(buf, static_cast<std::uint32_t>(m.rows));
    put_u32(buf, static_cast<std::uint32_t>(m.cols));
    for (double d : m.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        for (int i = 0; i < 8; ++i)
            buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    write_file_atomic(path, buf);
}

TokenMatrix load_token_matrix(const std::filesystem::path& path) {
    std::string buf = read_file(path);
    if (buf.size() < 16 || std::memcmp(buf.data(), kTokenMagic, 4) != 0)
        throw FormatError(path.string() + ": not a token-matrix file");
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (get_u32(p + 4) != kTokenVersion)
        throw FormatError(path.string() + ": unsupported version");
    std::uint32_t rows = get_u32(p + 8), cols = get_u32(p + 12);
    std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (buf.size() != 16 + count * 8)
        throw FormatError(path.string() + ": truncated payload");
    TokenMatrix m(static_cast<int>(rows), static_cast<int>(cols));
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(p[16 + i * 8 + b]) << (8 * b);
        std::memcpy(&m.data[i], &bits, 8);
    }
    return m;
}

void HiddenStateCache::save(const std::filesystem::path& dir) const {
    for (const auto& [key, matrix] : entries_) {
        char name[160];
        std::snprintf(name, sizeof(name), "hidden_%s_%03d.rivm",
                      key.first.c_str(), key.second);
        save_token_matrix(dir / name, matrix);
    }
}

HiddenStateCache HiddenStateCache::load(const std::filesystem::path& dir) {
    HiddenStateCache cache;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("hidden_", 0) != 0 || entry.path().extension() != ".rivm")
            continue;
        // hidden_<site>_<step>.rivm
        const std::string stem = entry.path().stem().string();
        auto us = stem.rfind('_');
        if (us == std::string::npos || us <= 7)
            throw FormatError("unrecognized cache file name: " + name);
        const std::string site = stem.substr(7, us - 7);
        const int step = std::stoi(stem.substr(us + 1));
        cache.capture(site, step, load_token_matrix(entry.path()));
    }
    return cache;
}

}  // namespace rival
