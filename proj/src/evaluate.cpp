#include "volmix/evaluate.hpp"

#include "volmix/csv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace volmix::evaluate {

namespace {

void require_nonempty(const PredictionSet& pred) {
    if (pred.empty()) throw Error(Errc::EmptySet, "prediction set is empty");
}

double mean_of(const PredictionSet& pred, auto&& term) {
    require_nonempty(pred);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += term(pred[i], i);
    return s / static_cast<double>(pred.size());
}

}  // namespace

double rmse(const PredictionSet& pred) {
    return std::sqrt(mean_of(pred, [](const Prediction& p, std::size_t) {
        const double e = p.v_true - p.v_hat;
        return e * e;
    }));
}

double mae(const PredictionSet& pred) {
    return mean_of(pred, [](const Prediction& p, std::size_t) { return std::abs(p.v_true - p.v_hat); });
}

double nnll(const PredictionSet& pred) {
    return mean_of(pred, [](const Prediction& p, std::size_t i) {
        if (!p.nll_y) throw Error(Errc::MissingLikelihood, "prediction has no likelihood", i);
        return *p.nll_y + std::log(p.a);
    });
}

double iw(const PredictionSet& pred) {
    return mean_of(pred, [](const Prediction& p, std::size_t i) {
        if (!p.sd_y) throw Error(Errc::MissingSd, "prediction has no standard deviation", i);
        return *p.sd_y * p.a;
    });
}

RelMetrics rel_metrics(const PredictionSet& pred) {
    require_nonempty(pred);
    double sq = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred[i].v_true > 0.0)) throw Error(Errc::ZeroTrueVolume, "relative metrics need v_true > 0", i);
        const double r = (pred[i].v_true - pred[i].v_hat) / pred[i].v_true;
        sq += r * r;
        ab += std::abs(r);
    }
    const auto n = static_cast<double>(pred.size());
    return {std::sqrt(sq / n), ab / n};
}

MetricsReport report(const PredictionSet& pred) {
    MetricsReport r;
    r.n = pred.size();
    r.rmse = rmse(pred);
    r.mae = mae(pred);
    const bool has_nll = std::all_of(pred.begin(), pred.end(), [](const Prediction& p) { return p.nll_y.has_value(); });
    const bool has_sd = std::all_of(pred.begin(), pred.end(), [](const Prediction& p) { return p.sd_y.has_value(); });
    if (has_nll) r.nnll = nnll(pred);
    if (has_sd) r.iw = iw(pred);
    return r;
}

std::vector<int> quartile_groups(const PredictionSet& pred) {
    const std::size_t n = pred.size();
    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = pred[i].v_true;
    std::sort(sorted.begin(), sorted.end());
    std::array<double, 3> bound{};
    for (std::size_t k = 1; k <= 3; ++k) {
        const std::size_t rank = (k * n + 3) / 4;  // ceil(k n / 4)
        bound[k - 1] = sorted[std::max<std::size_t>(rank, 1) - 1];
    }
    std::vector<int> group(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            if (pred[i].v_true <= bound[static_cast<std::size_t>(k)]) {
                group[i] = k;
                break;
            }
        }
    }
    return group;
}

QuartileReport quartile_report(const PredictionSet& pred) {
    if (pred.size() < 4) throw Error(Errc::EmptySet, "quartile report needs at least 4 predictions");
    const auto group = quartile_groups(pred);
    std::array<PredictionSet, 4> parts;
    for (std::size_t i = 0; i < pred.size(); ++i) parts[static_cast<std::size_t>(group[i])].push_back(pred[i]);
    QuartileReport out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < 4; ++k) {
        auto& row = out.rows[k];
        row.n = parts[k].size();
        if (parts[k].empty()) {
            row.lower = row.upper = row.rmse = row.rel_rmse = row.mae = row.mape = nan;
            continue;
        }
        auto [lo, hi] = std::minmax_element(parts[k].begin(), parts[k].end(),
                                            [](const Prediction& a, const Prediction& b) { return a.v_true < b.v_true; });
        row.lower = lo->v_true;
        row.upper = hi->v_true;
        row.rmse = rmse(parts[k]);
        row.mae = mae(parts[k]);
        const auto rel = rel_metrics(parts[k]);
        row.rel_rmse = rel.rel_rmse;
        row.mape = rel.mape;
    }
    return out;
}

std::vector<ComparisonRow> compare(const std::vector<NamedReport>& reports) {
    using Getter = std::optional<double> (*)(const MetricsReport&);
    const std::array<std::pair<const char*, Getter>, 4> metrics{{
        {"rmse", [](const MetricsReport& r) -> std::optional<double> { return r.rmse; }},
        {"mae", [](const MetricsReport& r) -> std::optional<double> { return r.mae; }},
        {"nnll", [](const MetricsReport& r) { return r.nnll; }},
        {"iw", [](const MetricsReport& r) { return r.iw; }},
    }};
    std::vector<ComparisonRow> rows;
    for (const auto& [name, get] : metrics) {
        ComparisonRow row;
        row.metric = name;
        std::optional<double> best;
        for (const auto& r : reports) {
            row.values.push_back(get(r.metrics));
            if (row.values.back() && (!best || *row.values.back() < *best)) best = row.values.back();
        }
        for (const auto& v : row.values) row.best.push_back(v && best && *v == *best);
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? csv::format_double(*v) : "NA"; }

}  // namespace

void write_report_csv(std::ostream& out, const std::string& model, const MetricsReport& report,
                      const QuartileReport* quartiles) {
    out << "model,metric,value,quartile\n";
    out << model << ",n," << report.n << ",\n";
    out << model << ",rmse," << csv::format_double(report.rmse) << ",\n";
    out << model << ",mae," << csv::format_double(report.mae) << ",\n";
    out << model << ",nnll," << cell(report.nnll) << ",\n";
    out << model << ",iw," << cell(report.iw) << ",\n";
    if (quartiles == nullptr) return;
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& q = quartiles->rows[k];
        const std::string tag = "Q" + std::to_string(k + 1);
        out << model << ",n," << q.n << ',' << tag << '\n';
        out << model << ",rmse," << csv::format_double(q.rmse) << ',' << tag << '\n';
        out << model << ",rel_rmse," << csv::format_double(q.rel_rmse) << ',' << tag << '\n';
        out << model << ",mae," << csv::format_double(q.mae) << ',' << tag << '\n';
        out << model << ",mape," << csv::format_double(q.mape) << ',' << tag << '\n';
    }
}

void write_comparison_markdown(std::ostream& out, const std::vector<NamedReport>& reports,
                               const std::vector<ComparisonRow>& rows) {
    out << "| metric |";
    for (const auto& r : reports) out << ' ' << r.model << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < reports.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& row : rows) {
        out << "| " << row.metric << " (lower is better) |";
        for (std::size_t i = 0; i < row.values.size(); ++i) {
            out << ' ' << (row.best[i] ? "**" : "") << cell(row.values[i]) << (row.best[i] ? "**" : "") << " |";
        }
        out << '\n';
    }
}

void write_comparison_csv(std::ostream& out, const std::vector<NamedReport>& reports,
                          const std::vector<ComparisonRow>& rows) {
    out << "metric,model,value,best\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < reports.size(); ++i) {
            out << row.metric << ',' << reports[i].model << ',' << cell(row.values[i]) << ','
                << (row.best[i] ? 1 : 0) << '\n';
        }
    }
}

void write_band_csv(std::ostream& out, const PredictionSet& pred, const std::vector<std::vector<double>>& gates) {
    const std::size_t s = gates.empty() ? 0 : gates.front().size();
    out << "t,v_true,mean,lo,hi";
    for (std::size_t k = 0; k < s; ++k) out << ",gate_" << k + 1;
    out << '\n';
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto& p = pred[i];
        const double sd = p.sd_y ? *p.sd_y * p.a : 0.0;
        out << p.t << ',' << csv::format_double(p.v_true) << ',' << csv::format_double(p.v_hat) << ','
            << csv::format_double(std::max(0.0, p.v_hat - 2.0 * sd)) << ','
            << csv::format_double(p.v_hat + 2.0 * sd);
        if (i < gates.size()) {
            for (double g : gates[i]) out << ',' << csv::format_double(g);
        }
        out << '\n';
    }
}

}  // namespace volmix::evaluate
