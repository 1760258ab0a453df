#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "procspace/core.hpp"

namespace procspace {

// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

// Four standard normals from one Philox block via Box-Muller.
std::array<double, 4> philox_normals(std::uint64_t seed, std::array<std::uint32_t, 4> ctr);
// Two uniforms in [0, 1) from one Philox block (53-bit resolution).
std::array<double, 2> philox_uniforms(std::uint64_t seed, std::array<std::uint32_t, 4> ctr);

// Counter-based normal/uniform stream addressed by (seed, stream, index); used for initial
// laws and random test batteries so that every draw is reproducible in isolation.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint32_t stream) : seed_(seed), stream_(stream) {}
    double normal(std::uint64_t index) const;
    double uniform(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::uint32_t stream_;
};

enum class NoiseMode { gaussian, tree };

// Tree coordinates of an ensemble slot: base particle plus the branch it follows.
struct TreeSlot {
    int base_common = 0;
    int base_idio = 0;
    std::uint64_t common_branch = 0;
    std::uint64_t idio_branch = 0;
};

// Brownian increments for every (common index, idio index, step), split as (B1, B0).
// Gaussian mode draws N(0, dt I) from Philox streams keyed by the slot and step; tree mode
// enumerates every Rademacher path of +-sqrt(dt) from first_step on. In both modes the
// common block depends only on the common index.
class NoiseBundle {
public:
    NoiseBundle() = default;
    NoiseBundle(NoiseMode mode, std::uint64_t seed, TimeGrid grid, int idio_dim, int common_dim,
                int first_step = 0);

    NoiseMode mode() const noexcept { return mode_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    int idio_dim() const noexcept { return m1_; }
    int common_dim() const noexcept { return m0_; }
    int dim() const noexcept { return m1_ + m0_; }
    int first_step() const noexcept { return first_; }

    Vec increment(int c, int i, int k) const;

    // Tree-mode structure. Branch counts are 1 in gaussian mode.
    int tree_steps() const noexcept { return grid_.steps() - first_; }
    std::uint64_t common_branches() const noexcept { return nb0_; }
    std::uint64_t idio_branches() const noexcept { return nb1_; }
    TreeSlot slot(int c, int i) const;
    // Branch bits observed strictly before step k.
    std::uint64_t common_prefix(int c, int k) const;
    std::uint64_t idio_prefix(int i, int k) const;
    // Bits of one step's increment (Rademacher signs) in tree mode.
    std::uint64_t common_bits(int c, int k) const;
    std::uint64_t idio_bits(int i, int k) const;

    // Bundle whose local slot (c, i) reads the slot map[c * n_idio + i] of this bundle.
    NoiseBundle remapped(const std::vector<std::array<int, 2>>& map, int n_idio) const;
    // Bundle reading the listed common indices of this bundle (all idio indices kept).
    NoiseBundle select_commons(const std::vector<int>& commons, int n_idio) const;
    NoiseBundle with_seed(std::uint64_t seed) const;

    // Cumulative noise paths B (dim x nodes, B at node 0 is 0) for an ensemble layout.
    ProcessEnsemble cumulative(int n_common, int n_idio) const;

private:
    std::array<int, 2> resolve(int c, int i) const;

    NoiseMode mode_ = NoiseMode::gaussian;
    std::uint64_t seed_ = 0;
    TimeGrid grid_;
    int m1_ = 1;
    int m0_ = 0;
    int first_ = 0;
    std::uint64_t nb0_ = 1;
    std::uint64_t nb1_ = 1;
    int map_idio_ = 0;
    std::shared_ptr<const std::vector<std::array<int, 2>>> map_;
};

// Expands a base ensemble so that slot (c, i) holds base particle (c / nb0, i / nb1) with
// weight w_base / (nb0 * nb1). Gaussian bundles return the ensemble unchanged.
ProcessEnsemble tree_expand(const ProcessEnsemble& base, const NoiseBundle& noise);

}  // namespace procspace
