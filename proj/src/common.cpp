#include "volmix/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace volmix {

const char* to_string(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::Io: return "Io";
        case Errc::MalformedRow: return "MalformedRow";
        case Errc::NonMonotoneTimestamp: return "NonMonotoneTimestamp";
        case Errc::NonPositiveSize: return "NonPositiveSize";
        case Errc::CrossedBook: return "CrossedBook";
        case Errc::NoSnapshotBeforeGridStart: return "NoSnapshotBeforeGridStart";
        case Errc::EmptySeasonalSlot: return "EmptySeasonalSlot";
        case Errc::SourceGridMismatch: return "SourceGridMismatch";
        case Errc::TooFewInstances: return "TooFewInstances";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::Overflow: return "Overflow";
        case Errc::NonPositiveTarget: return "NonPositiveTarget";
        case Errc::DivergedLoss: return "DivergedLoss";
        case Errc::NonStationaryFit: return "NonStationaryFit";
        case Errc::OptimizerFailed: return "OptimizerFailed";
        case Errc::AllFitsFailed: return "AllFitsFailed";
        case Errc::TooFewSamples: return "TooFewSamples";
        case Errc::EmptySet: return "EmptySet";
        case Errc::MissingLikelihood: return "MissingLikelihood";
        case Errc::MissingSd: return "MissingSd";
        case Errc::ZeroTrueVolume: return "ZeroTrueVolume";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

Error::Error(Errc code, const std::string& what, std::size_t position)
    : std::runtime_error(std::string(to_string(code)) + "(" + std::to_string(position) + "): " + what),
      code_(code),
      position_(position) {}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
    std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double log_sum_exp(std::span<const double> v) noexcept {
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace volmix
