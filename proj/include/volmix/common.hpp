#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace volmix {

/// Unix time in seconds.
using Epoch = std::int64_t;

enum class Errc {
    InvalidArgument,
    Io,
    MalformedRow,
    NonMonotoneTimestamp,
    NonPositiveSize,
    CrossedBook,
    NoSnapshotBeforeGridStart,
    EmptySeasonalSlot,
    SourceGridMismatch,
    TooFewInstances,
    ShapeMismatch,
    Overflow,
    NonPositiveTarget,
    DivergedLoss,
    NonStationaryFit,
    OptimizerFailed,
    AllFitsFailed,
    TooFewSamples,
    EmptySet,
    MissingLikelihood,
    MissingSd,
    ZeroTrueVolume,
    NonFiniteLoss,
};

[[nodiscard]] const char* to_string(Errc code) noexcept;

/// Every failure surfaced by the library. `line()` is set for file-parsing
/// errors (1-based data row, header excluded) and `index()` for errors tied to
/// a slot or element position.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what);
    Error(Errc code, const std::string& what, std::size_t position);

    [[nodiscard]] Errc code() const noexcept { return code_; }
    [[nodiscard]] std::optional<std::size_t> position() const noexcept { return position_; }

private:
    Errc code_;
    std::optional<std::size_t> position_;
};

/// Dense row-major matrix. Used for feature windows (features x lags) and
/// flat design matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }

    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> data() noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Deterministic 64-bit seed derivation (splitmix64 finalizer). Used to split
/// one root seed into independent per-component streams.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept;

/// Numerically stable log(sum(exp(v))). Returns -inf for an empty span.
[[nodiscard]] double log_sum_exp(std::span<const double> v) noexcept;

/// FNV-1a hash as 16 lowercase hex characters.
[[nodiscard]] std::string fnv1a_hex(std::string_view text);

}  // namespace volmix
