#include "procspace/noise.hpp"

#include <cmath>
#include <numbers>

namespace procspace {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;
constexpr std::uint32_t kCommonTag = 0xFFFFFFFFu;
constexpr std::uint32_t kStreamTag = 0x80000000u;
constexpr int kMaxTreeBits = 24;

std::array<std::uint32_t, 2> key_of(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(bits >> 11) * 0x1p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            key[0] += kW0;
            key[1] += kW1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
}

std::array<double, 2> philox_uniforms(std::uint64_t seed, std::array<std::uint32_t, 4> ctr) {
    const auto r = philox4x32_10(ctr, key_of(seed));
    return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
}

std::array<double, 4> philox_normals(std::uint64_t seed, std::array<std::uint32_t, 4> ctr) {
    const auto r = philox4x32_10(ctr, key_of(seed));
    std::array<double, 4> out{};
    // Box-Muller on (u1, u2) from words (0,1) and (2,3), then a second pair from a
    // word-swapped combination so each block yields four normals.
    const double u[4] = {to_unit(r[0], r[1]), to_unit(r[2], r[3]), to_unit(r[1], r[2]), to_unit(r[3], r[0])};
    for (int h = 0; h < 2; ++h) {
        const double rad = std::sqrt(-2.0 * std::log(1.0 - u[2 * h]));
        const double ang = 2.0 * std::numbers::pi * u[2 * h + 1];
        out[2 * h] = rad * std::cos(ang);
        out[2 * h + 1] = rad * std::sin(ang);
    }
    return out;
}

double CounterStream::normal(std::uint64_t index) const {
    const std::uint64_t block = index / 4;
    const auto z = philox_normals(seed_, {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                          stream_, kStreamTag});
    return z[index % 4];
}

double CounterStream::uniform(std::uint64_t index) const {
    const std::uint64_t block = index / 2;
    const auto u = philox_uniforms(seed_, {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                           stream_, kStreamTag | 1u});
    return u[index % 2];
}

NoiseBundle::NoiseBundle(NoiseMode mode, std::uint64_t seed, TimeGrid grid, int idio_dim, int common_dim,
                         int first_step)
    : mode_(mode), seed_(seed), grid_(grid), m1_(idio_dim), m0_(common_dim), first_(first_step) {
    if (idio_dim < 0 || common_dim < 0 || idio_dim + common_dim == 0) {
        throw ParameterError("noise needs a nonnegative split with positive total dimension");
    }
    if (first_step < 0 || first_step > grid.steps()) throw RangeError("noise first step outside grid");
    if (mode == NoiseMode::tree) {
        const int n = grid.steps() - first_step;
        if (m1_ * n > kMaxTreeBits || m0_ * n > kMaxTreeBits) {
            throw UnsupportedError("tree noise too large: at most 24 branch bits per block");
        }
        nb1_ = std::uint64_t{1} << (m1_ * n);
        nb0_ = std::uint64_t{1} << (m0_ * n);
    }
}

std::array<int, 2> NoiseBundle::resolve(int c, int i) const {
    if (!map_) return {c, i};
    return (*map_).at(static_cast<size_t>(c) * static_cast<size_t>(map_idio_) + static_cast<size_t>(i));
}

TreeSlot NoiseBundle::slot(int c, int i) const {
    const auto g = resolve(c, i);
    TreeSlot s;
    s.base_common = static_cast<int>(static_cast<std::uint64_t>(g[0]) / nb0_);
    s.base_idio = static_cast<int>(static_cast<std::uint64_t>(g[1]) / nb1_);
    s.common_branch = static_cast<std::uint64_t>(g[0]) % nb0_;
    s.idio_branch = static_cast<std::uint64_t>(g[1]) % nb1_;
    return s;
}

std::uint64_t NoiseBundle::common_prefix(int c, int k) const {
    if (mode_ != NoiseMode::tree || k <= first_) return 0;
    const int bits = (k - first_) * m0_;
    const std::uint64_t mask = bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
    return slot(c, 0).common_branch & mask;
}

std::uint64_t NoiseBundle::idio_prefix(int i, int k) const {
    if (mode_ != NoiseMode::tree || k <= first_) return 0;
    const int bits = (k - first_) * m1_;
    const std::uint64_t mask = bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
    return slot(0, i).idio_branch & mask;
}

std::uint64_t NoiseBundle::common_bits(int c, int k) const {
    if (mode_ != NoiseMode::tree || k < first_) return 0;
    const std::uint64_t mask = (std::uint64_t{1} << m0_) - 1;
    return (slot(c, 0).common_branch >> ((k - first_) * m0_)) & mask;
}

std::uint64_t NoiseBundle::idio_bits(int i, int k) const {
    if (mode_ != NoiseMode::tree || k < first_) return 0;
    const std::uint64_t mask = (std::uint64_t{1} << m1_) - 1;
    return (slot(0, i).idio_branch >> ((k - first_) * m1_)) & mask;
}

Vec NoiseBundle::increment(int c, int i, int k) const {
    if (k < 0 || k >= grid_.steps()) throw RangeError("noise step out of range");
    Vec out = Vec::Zero(dim());
    if (k < first_) return out;
    if (mode_ == NoiseMode::tree) {
        const double h = std::sqrt(grid_.dt());
        const TreeSlot s = slot(c, i);
        const std::uint64_t ib = s.idio_branch >> ((k - first_) * m1_);
        const std::uint64_t cb = s.common_branch >> ((k - first_) * m0_);
        for (int j = 0; j < m1_; ++j) out[j] = ((ib >> j) & 1u) ? h : -h;
        for (int j = 0; j < m0_; ++j) out[m1_ + j] = ((cb >> j) & 1u) ? h : -h;
        return out;
    }
    const auto g = resolve(c, i);
    const double sd = std::sqrt(grid_.dt());
    const auto step = static_cast<std::uint32_t>(k);
    for (int j = 0; j < m1_; j += 4) {
        const auto z = philox_normals(seed_, {step, static_cast<std::uint32_t>(g[1]), static_cast<std::uint32_t>(g[0]),
                                              static_cast<std::uint32_t>(j / 4)});
        for (int q = 0; q < 4 && j + q < m1_; ++q) out[j + q] = sd * z[static_cast<size_t>(q)];
    }
    for (int j = 0; j < m0_; j += 4) {
        const auto z = philox_normals(seed_, {step, kCommonTag, static_cast<std::uint32_t>(g[0]),
                                              static_cast<std::uint32_t>(j / 4)});
        for (int q = 0; q < 4 && j + q < m0_; ++q) out[m1_ + j + q] = sd * z[static_cast<size_t>(q)];
    }
    return out;
}

NoiseBundle NoiseBundle::remapped(const std::vector<std::array<int, 2>>& map, int n_idio) const {
    NoiseBundle out = *this;
    auto resolved = std::make_shared<std::vector<std::array<int, 2>>>();
    resolved->reserve(map.size());
    for (const auto& m : map) resolved->push_back(resolve(m[0], m[1]));
    out.map_ = std::move(resolved);
    out.map_idio_ = n_idio;
    return out;
}

NoiseBundle NoiseBundle::select_commons(const std::vector<int>& commons, int n_idio) const {
    std::vector<std::array<int, 2>> map;
    map.reserve(commons.size() * static_cast<size_t>(n_idio));
    for (int c : commons) {
        for (int i = 0; i < n_idio; ++i) map.push_back({c, i});
    }
    return remapped(map, n_idio);
}

NoiseBundle NoiseBundle::with_seed(std::uint64_t seed) const {
    NoiseBundle out = *this;
    out.seed_ = seed;
    return out;
}

ProcessEnsemble NoiseBundle::cumulative(int n_common, int n_idio) const {
    ProcessEnsemble b(grid_, dim(), n_common, n_idio);
    for (int c = 0; c < n_common; ++c) {
        for (int i = 0; i < n_idio; ++i) {
            Mat& v = b.particle(b.index(c, i)).values();
            for (int k = 0; k < grid_.steps(); ++k) v.col(k + 1) = v.col(k) + increment(c, i, k);
        }
    }
    return b;
}

ProcessEnsemble tree_expand(const ProcessEnsemble& base, const NoiseBundle& noise) {
    if (noise.mode() != NoiseMode::tree) return base;
    if (!(base.grid() == noise.grid())) throw ShapeError("tree expansion: grid mismatch");
    const std::uint64_t nb0 = noise.common_branches();
    const std::uint64_t nb1 = noise.idio_branches();
    const std::uint64_t total = static_cast<std::uint64_t>(base.size()) * nb0 * nb1;
    if (total > (std::uint64_t{1} << 22)) throw UnsupportedError("tree expansion exceeds 2^22 slots");
    ProcessEnsemble out(base.grid(), base.dim(), static_cast<int>(base.n_common() * nb0),
                        static_cast<int>(base.n_idio() * nb1));
    std::vector<double> w(static_cast<size_t>(out.size()));
    for (int c = 0; c < out.n_common(); ++c) {
        for (int i = 0; i < out.n_idio(); ++i) {
            const int src = base.index(static_cast<int>(c / nb0), static_cast<int>(i / nb1));
            const int dst = out.index(c, i);
            out.particle(dst) = base.particle(src);
            w[static_cast<size_t>(dst)] = base.weight(src) / static_cast<double>(nb0 * nb1);
        }
    }
    double s = 0.0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    out.set_weights(std::move(w));
    return out;
}

}  // namespace procspace
