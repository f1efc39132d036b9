#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rival {

// rows = tokens, cols = feature dim, row-major.
struct TokenMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    TokenMatrix() = default;
    TokenMatrix(int r, int c)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) {
        return data[static_cast<std::size_t>(r) * cols + c];
    }
    double at(int r, int c) const {
        return data[static_cast<std::size_t>(r) * cols + c];
    }
};

// Frozen projections of one self-attention site, each dim x dim row-major
// (input index -> output index).
struct SiteWeights {
    int dim = 0;
    std::vector<double> wq, wk, wv, wo;
};

enum class InjectionMode { Off, Replace, Fuse };

const char* to_string(InjectionMode m);
InjectionMode injection_mode_from_string(const std::string& s);

// t_align splits the generation chain: Replace while t > t_align, Fuse (or
// Replace again when fusion is ablated) once t <= t_align.
struct InjectionPolicy {
    int t_align = 30;
    bool enabled = true;         // AI toggle
    bool fusion_enabled = true;  // AF toggle
};

InjectionMode policy_mode(int t, const InjectionPolicy& policy);

struct AttentionResult {
    TokenMatrix tokens;
    double score_ref = 0.0;  // mean softmax mass on reference-sourced keys
};

// Cross-image self-attention with Q always from v_g and K,V from v_g,
// v_r, or their concatenation (generation tokens first) depending on mode.
// v_r may be null in Off mode.
AttentionResult injected_attention(const TokenMatrix& v_g,
                                   const TokenMatrix* v_r, InjectionMode mode,
                                   const SiteWeights& w);

// Reference hidden states captured during inversion, keyed by
// (site, step). Written once per pair by the single inversion pass, then
// read-only during generation.
class HiddenStateCache {
public:
    void capture(const std::string& site, int step, TokenMatrix v);
    const TokenMatrix& lookup(const std::string& site, int step) const;
    bool contains(const std::string& site, int step) const;
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    // One "RIVM" file per entry: u32 version, u32 rows, u32 cols,
    // little-endian doubles.
    void save(const std::filesystem::path& dir) const;
    static HiddenStateCache load(const std::filesystem::path& dir);

private:
    std::map<std::pair<std::string, int>, TokenMatrix> entries_;
};

void save_token_matrix(const std::filesystem::path& path,
                       const TokenMatrix& m);
TokenMatrix load_token_matrix(const std::filesystem::path& path);

// Per-call attention wiring handed to a denoiser: where to capture hidden
// states (inversion) or which cached states to inject and how (generation).
struct AttentionContext {
    InjectionMode mode = InjectionMode::Off;
    int step = -1;
    const HiddenStateCache* inject_from = nullptr;
    HiddenStateCache* capture_to = nullptr;
    std::map<std::string, double>* scores = nullptr;
};

}  // namespace rival
