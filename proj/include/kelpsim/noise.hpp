#pragma once
// Reproducible randomness.
//
// Every (master seed, trajectory, component) triple owns an independent
// Philox4x32-10 stream, so trajectories can be generated in any order or in
// parallel and still be bit-identical.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kelpsim/model.hpp"

namespace kelpsim {

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

enum class ComponentTag : std::uint32_t { J = 1, A = 2, E = 3, P = 4, Jumps = 5, Ibm = 6, Bridge = 7, Aux = 8 };

inline std::string_view tag_name(ComponentTag t) {
    switch (t) {
        case ComponentTag::J: return "J";
        case ComponentTag::A: return "A";
        case ComponentTag::E: return "E";
        case ComponentTag::P: return "P";
        case ComponentTag::Jumps: return "jumps";
        case ComponentTag::Ibm: return "ibm";
        case ComponentTag::Bridge: return "bridge";
        case ComponentTag::Aux: return "aux";
    }
    return "?";
}

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t trajectory_index = 0;
    friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Sequential view of one counter-based stream. Value type; copying forks the
/// position. Not to be advanced from two threads at once.
class Stream {
public:
    Stream(const SeedSpec& seed, ComponentTag tag, std::uint32_t sub = 0) {
        std::uint64_t h = splitmix64(seed.master_seed);
        h = splitmix64(h ^ seed.trajectory_index);
        h = splitmix64(h ^ (std::uint64_t{static_cast<std::uint32_t>(tag)} << 32 | sub));
        key_ = {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
        const std::uint64_t salt = splitmix64(h);
        salt_ = {static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    }

    std::uint64_t position() const { return counter_; }

    /// Next 128 random bits.
    Philox4x32::Counter block() {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                      salt_[0], salt_[1]};
        ++counter_;
        return Philox4x32::generate(ctr, key_);
    }

    /// Two uniforms in the open interval (0,1) with 53-bit resolution.
    std::array<double, 2> uniform_pair() {
        const auto b = block();
        return {to_open_unit(b[0], b[1]), to_open_unit(b[2], b[3])};
    }

    double uniform() {
        if (has_spare_uniform_) {
            has_spare_uniform_ = false;
            return spare_uniform_;
        }
        const auto u = uniform_pair();
        spare_uniform_ = u[1];
        has_spare_uniform_ = true;
        return u[0];
    }

    /// Standard normal (Box-Muller, both outputs used).
    double normal() {
        if (has_spare_normal_) {
            has_spare_normal_ = false;
            return spare_normal_;
        }
        const auto u = uniform_pair();
        const double r = std::sqrt(-2.0 * std::log(u[0]));
        const double th = 2.0 * std::numbers::pi * u[1];
        spare_normal_ = r * std::sin(th);
        has_spare_normal_ = true;
        return r * std::cos(th);
    }

private:
    static double to_open_unit(std::uint32_t lo, std::uint32_t hi) {
        const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;  // 53 bits
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_{};
    std::array<std::uint32_t, 2> salt_{};
    std::uint64_t counter_ = 0;
    double spare_normal_ = 0.0;
    double spare_uniform_ = 0.0;
    bool has_spare_normal_ = false;
    bool has_spare_uniform_ = false;
};

/// Draw from N(0, dt).
inline double gaussian_increment(Stream& stream, double dt) {
    if (!(dt > 0.0)) throw ParameterError("gaussian_increment: dt must be positive");
    return std::sqrt(dt) * stream.normal();
}

struct JumpEvent {
    double time = 0.0;
    double mark = 0.0;
    friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

/// Inverse-CDF draw from the discrete mark law.
inline double draw_mark(double u, std::span<const MarkAtom> marks) {
    double acc = 0.0;
    for (const auto& m : marks) {
        acc += m.prob;
        if (u < acc) return m.z;
    }
    return marks.back().z;
}

/// First arrival of a rate-lambda Poisson clock inside a cell of length dt.
/// Returns the offset tau in (0, dt] and its mark, or nothing. Always consumes
/// exactly one block of the stream so that cell k uses block k.
inline std::optional<JumpEvent> first_jump_in_cell(Stream& stream, double lambda, double dt,
                                                   std::span<const MarkAtom> marks) {
    const auto u = stream.uniform_pair();
    if (lambda <= 0.0 || marks.empty()) return std::nullopt;
    const double tau = -std::log(u[0]) / lambda;
    if (tau > dt) return std::nullopt;
    return JumpEvent{tau, draw_mark(u[1], marks)};
}

/// Brownian-bridge split of each increment over dt into two increments over
/// dt/2 whose sum is the parent.
inline std::vector<double> refine_increments(std::span<const double> coarse, double dt, Stream& bridge) {
    std::vector<double> fine;
    fine.reserve(2 * coarse.size());
    const double half_sd = 0.5 * std::sqrt(dt);  // conditional sd of the first child
    for (double parent : coarse) {
        const double first = 0.5 * parent + half_sd * bridge.normal();
        fine.push_back(first);
        fine.push_back(parent - first);
    }
    return fine;
}

/// Sum consecutive groups of `factor` increments.
inline std::vector<double> coarsen_increments(std::span<const double> fine, std::size_t factor = 2) {
    std::vector<double> coarse(fine.size() / factor, 0.0);
    for (std::size_t i = 0; i < coarse.size(); ++i)
        for (std::size_t k = 0; k < factor; ++k) coarse[i] += fine[i * factor + k];
    return coarse;
}

}  // namespace kelpsim
