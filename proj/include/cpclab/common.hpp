#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpclab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr int kNumTopics = 14;
constexpr int kNumBiasScores = 5;  // scores -2..+2, stored at index score+2
constexpr int kNumTypologies = 9;

// Topic index order follows the dataset's topic table (row-wise).
inline const std::array<std::string, kNumTopics>& topic_names() {
    static const std::array<std::string, kNumTopics> names = {
        "abortion",      "environment", "guns",              "health care",
        "immigration",   "LGBTQ",       "racism",            "taxes",
        "technology",    "trade",       "Trump impeachment", "US military",
        "US 2020 election", "welfare"};
    return names;
}

inline int bias_class_of(int bias_score) {
    return bias_score > 0 ? 1 : (bias_score < 0 ? -1 : 0);
}

// Bad inputs, bad config, malformed files.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// File ingestion problems; message names the offending record.
class IngestError : public std::runtime_error {
public:
    explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

// Stochastic process could not complete (e.g. corpus exhausted).
class SimulationError : public std::runtime_error {
public:
    explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf or divergence detected in numeric code.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Orchestration-level failures (missing artifacts, stage errors).
class PipelineError : public std::runtime_error {
public:
    explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a 64-bit, used for stage labels and artifact content hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

std::string format_double(double v);       // shortest round-trip ("%.17g" trimmed)
std::string format_fixed(double v, int decimals);
std::string hex64(std::uint64_t v);

// Runs fn(i) for i in [0, n). nthreads <= 1 runs inline. Each index writes
// only its own output slot, so results are identical for any thread count.
void parallel_for(std::size_t n, int nthreads, const std::function<void(std::size_t)>& fn);

}  // namespace cpclab
