#include "rival/latent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "rival/errors.hpp"
#include "rival/fsutil.hpp"

namespace rival {

bool LatentTensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

// Sums a multiset of values independent of their original order.
double sorted_sum(std::vector<double>& scratch) {
    std::sort(scratch.begin(), scratch.end());
    double acc = 0.0;
    for (double v : scratch) acc += v;
    return acc;
}

void fit_moments(const double* begin, const double* end, double& mean,
                 double& stddev) {
    const std::size_t n = static_cast<std::size_t>(end - begin);
    std::vector<double> scratch(begin, end);
    mean = sorted_sum(scratch) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = begin[i] - mean;
        scratch[i] = d * d;
    }
    stddev = std::sqrt(sorted_sum(scratch) / static_cast<double>(n));
}

}  // namespace

LatentStats stats(const LatentTensor& x) {
    if (x.size() == 0)
        throw InvalidInputError("stats: empty tensor");
    LatentStats s;
    s.mean.resize(x.channels);
    s.stddev.resize(x.channels);
    const std::size_t hw = x.spatial_size();
    for (int c = 0; c < x.channels; ++c) {
        const double* p = x.data.data() + static_cast<std::size_t>(c) * hw;
        fit_moments(p, p + hw, s.mean[c], s.stddev[c]);
    }
    return s;
}

void global_fit(const LatentTensor& x, double& mean, double& stddev) {
    if (x.size() == 0)
        throw InvalidInputError("global_fit: empty tensor");
    fit_moments(x.data.data(), x.data.data() + x.size(), mean, stddev);
}

LatentTensor shuffle_spatial(const LatentTensor& x, SeededRng& rng) {
    const std::size_t n = x.spatial_size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i-- > 1;) {
        std::size_t j = rng.bounded(i + 1);
        std::swap(perm[i], perm[j]);
    }
    LatentTensor out(x.channels, x.height, x.width);
    for (int c = 0; c < x.channels; ++c) {
        const double* src = x.data.data() + static_cast<std::size_t>(c) * n;
        double* dst = out.data.data() + static_cast<std::size_t>(c) * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] = src[perm[i]];
    }
    return out;
}

LatentTensor sample_adaptive_gaussian(const LatentStats& s, int channels,
                                      int height, int width, SeededRng& rng) {
    if (static_cast<int>(s.mean.size()) != channels)
        throw InvalidInputError(
            "sample_adaptive_gaussian: stats have " +
            std::to_string(s.mean.size()) + " channels, tensor needs " +
            std::to_string(channels));
    LatentTensor out(channels, height, width);
    const std::size_t hw = out.spatial_size();
    for (int c = 0; c < channels; ++c) {
        double* p = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i)
            p[i] = s.mean[c] + s.stddev[c] * rng.next_normal();
    }
    return out;
}

LatentTensor sample_standard_gaussian(int channels, int height, int width,
                                      SeededRng& rng) {
    LatentTensor out(channels, height, width);
    for (double& v : out.data) v = rng.next_normal();
    return out;
}

LatentTensor adain(const LatentTensor& a, const LatentTensor& b) {
    if (a.channels != b.channels)
        throw InvalidInputError("adain: channel count mismatch");
    const LatentStats sa = stats(a);
    const LatentStats sb = stats(b);
    LatentTensor out(a.channels, a.height, a.width);
    const std::size_t hw = a.spatial_size();
    for (int c = 0; c < a.channels; ++c) {
        double denom = sa.stddev[c];
        if (denom == 0.0) {
            warn("adain: channel " + std::to_string(c) +
                 " has zero variance, passing through unscaled");
            denom = 1.0;
        }
        const double* src = a.data.data() + static_cast<std::size_t>(c) * hw;
        double* dst = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i)
            dst[i] = sb.stddev[c] * (src[i] - sa.mean[c]) / denom + sb.mean[c];
    }
    return out;
}

double kl_gaussian_fit(const LatentTensor& a, const LatentTensor& b) {
    double ma, sa, mb, sb;
    global_fit(a, ma, sa);
    global_fit(b, mb, sb);
    if (sa == 0.0 || sb == 0.0)
        throw DegenerateDistributionError(
            "kl_gaussian_fit: zero-variance input");
    double dm = ma - mb;
    return std::log(sb / sa) + (sa * sa + dm * dm) / (2.0 * sb * sb) - 0.5;
}

namespace {

constexpr char kLatentMagic[4] = {'R', 'I', 'V', 'L'};
constexpr std::uint32_t kLatentVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw FormatError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void save_latent(const std::filesystem::path& path, const LatentTensor& x) {
    std::string buf;
    buf.reserve(20 + x.size() * 8);
    buf.append(kLatentMagic, 4);
    put_u32(buf, kLatentVersion);
    put_u32(buf, static_cast<std::uint32_t>(x.channels));
    put_u32(buf, static_cast<std::uint32_t>(x.height));
    put_u32(buf, static_cast<std::uint32_t>(x.width));
    static_assert(sizeof(double) == 8);
    for (double v : x.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i)
            buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    write_file_atomic(path, buf);
}

LatentTensor load_latent(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    if (buf.size() < 20 || std::memcmp(buf.data(), kLatentMagic, 4) != 0)
        throw FormatError(path.string() + ": not a latent file");
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (get_u32(p + 4) != kLatentVersion)
        throw FormatError(path.string() + ": unsupported latent version");
    std::uint32_t c = get_u32(p + 8), h = get_u32(p + 12), w = get_u32(p + 16);
    std::size_t count = static_cast<std::size_t>(c) * h * w;
    if (buf.size() != 20 + count * 8)
        throw FormatError(path.string() + ": truncated latent payload");
    LatentTensor x(static_cast<int>(c), static_cast<int>(h),
                   static_cast<int>(w));
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(p[20 + i * 8 + b]) << (8 * b);
        std::memcpy(&x.data[i], &bits, 8);
    }
    if (!x.all_finite())
        throw FormatError(path.string() + ": non-finite latent values");
    return x;
}

}  // namespace rival
