#pragma once

// Error metrics on the raw-volume scale, quartile-conditioned reports and
// cross-model comparison.

#include "volmix/common.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace volmix::evaluate {

/// One test instance. sd_y and nll_y live on the deseasonalized scale; the
/// metrics convert them with the seasonal factor a.
struct Prediction {
    Epoch t = 0;
    double v_true = 0.0;
    double v_hat = 0.0;
    std::optional<double> sd_y;
    std::optional<double> nll_y;
    double a = 1.0;
};

using PredictionSet = std::vector<Prediction>;

[[nodiscard]] double rmse(const PredictionSet& pred);
[[nodiscard]] double mae(const PredictionSet& pred);
/// Mean of nll_y + ln a. Throws MissingLikelihood if any entry lacks nll_y.
[[nodiscard]] double nnll(const PredictionSet& pred);
/// Mean of sd_y * a. Throws MissingSd if any entry lacks sd_y.
[[nodiscard]] double iw(const PredictionSet& pred);

struct RelMetrics {
    double rel_rmse = 0.0;
    double mape = 0.0;
};

/// Throws ZeroTrueVolume if any v_true is not positive.
[[nodiscard]] RelMetrics rel_metrics(const PredictionSet& pred);

struct MetricsReport {
    std::size_t n = 0;
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> nnll;
    std::optional<double> iw;
};

/// nnll and iw are left empty when some prediction lacks the field.
[[nodiscard]] MetricsReport report(const PredictionSet& pred);

struct QuartileRow {
    std::size_t n = 0;
    double lower = 0.0;  // smallest v_true in the group
    double upper = 0.0;  // largest v_true in the group
    double rmse = 0.0;
    double rel_rmse = 0.0;
    double mae = 0.0;
    double mape = 0.0;
};

struct QuartileReport {
    std::array<QuartileRow, 4> rows;
};

/// Index of the quartile group of each prediction. Values are ranked by
/// v_true; the k-th boundary is the ceil(k n / 4)-th smallest value and
/// values equal to a boundary fall in the lower group.
[[nodiscard]] std::vector<int> quartile_groups(const PredictionSet& pred);

/// Requires n >= 4 (EmptySet otherwise).
[[nodiscard]] QuartileReport quartile_report(const PredictionSet& pred);

struct NamedReport {
    std::string model;
    MetricsReport metrics;
};

struct ComparisonRow {
    std::string metric;
    std::vector<std::optional<double>> values;  // one per model, empty for NA
    std::vector<bool> best;
};

/// Every metric is lower-is-better; the minimum over models that report it is
/// marked, with ties all marked.
[[nodiscard]] std::vector<ComparisonRow> compare(const std::vector<NamedReport>& reports);

/// model,metric,value,quartile
void write_report_csv(std::ostream& out, const std::string& model, const MetricsReport& report,
                      const QuartileReport* quartiles = nullptr);
void write_comparison_markdown(std::ostream& out, const std::vector<NamedReport>& reports,
                               const std::vector<ComparisonRow>& rows);
void write_comparison_csv(std::ostream& out, const std::vector<NamedReport>& reports,
                          const std::vector<ComparisonRow>& rows);

/// t,v_true,mean,lo,hi,gate_1..gate_S with lo = max(0, mean - 2 sd),
/// hi = mean + 2 sd (sd on the raw-volume scale). `gates` may be empty.
void write_band_csv(std::ostream& out, const PredictionSet& pred, const std::vector<std::vector<double>>& gates);

}  // namespace volmix::evaluate
