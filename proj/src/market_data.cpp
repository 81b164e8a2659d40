#include "volmix/market_data.hpp"

#include "volmix/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace volmix::market_data {

std::string to_string(Market m) { return m == Market::Target ? "target" : "external"; }
std::string to_string(Kind k) { return k == Kind::Transactions ? "transactions" : "orderbook"; }

Market parse_market(const std::string& s) {
    if (s == "target") return Market::Target;
    if (s == "external") return Market::External;
    throw Error(Errc::InvalidArgument, "unknown market '" + s + "'");
}

Kind parse_kind(const std::string& s) {
    if (s == "transactions") return Kind::Transactions;
    if (s == "orderbook") return Kind::OrderBook;
    throw Error(Errc::InvalidArgument, "unknown source kind '" + s + "'");
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    return in;
}

Epoch to_seconds(std::int64_t raw, bool ms) {
    if (!ms) return raw;
    // floor division so negative millisecond stamps land in the right second
    return raw >= 0 ? raw / 1000 : -((-raw + 999) / 1000);
}

}  // namespace

std::vector<TradeRecord> load_trades(const std::filesystem::path& path, TradeCsvSchema schema) {
    auto in = open_or_throw(path);
    return parse_trades(in, schema);
}

std::vector<TradeRecord> parse_trades(std::istream& in, TradeCsvSchema schema) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::MalformedRow, "missing header", 0);
    if (csv::trim(line) != "timestamp,price,size,side") {
        throw Error(Errc::MalformedRow, "trade header must be 'timestamp,price,size,side'", 0);
    }

    std::vector<TradeRecord> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto trimmed = csv::trim(line);
        if (trimmed.empty()) continue;
        const auto fields = csv::split(trimmed);
        if (fields.size() != 4) throw Error(Errc::MalformedRow, "expected 4 fields", row);

        TradeRecord rec;
        const auto ts = csv::parse_int(fields[0]);
        const auto price = csv::parse_double(fields[1]);
        const auto size = csv::parse_double(fields[2]);
        if (!ts || !price || !size) throw Error(Errc::MalformedRow, "unparseable field", row);
        rec.timestamp = to_seconds(*ts, schema.timestamps_ms);
        rec.price = *price;
        rec.size = *size;
        if (fields[3] == "B") {
            rec.side = Side::BuyInitiated;
        } else if (fields[3] == "S") {
            rec.side = Side::SellInitiated;
        } else {
            throw Error(Errc::MalformedRow, "side must be B or S", row);
        }
        if (!(rec.size > 0.0)) throw Error(Errc::NonPositiveSize, "trade size must be positive", row);
        if (!(rec.price > 0.0)) throw Error(Errc::MalformedRow, "trade price must be positive", row);
        if (!out.empty() && rec.timestamp < out.back().timestamp) {
            throw Error(Errc::NonMonotoneTimestamp, "timestamps must be non-decreasing", row);
        }
        out.push_back(rec);
    }
    return out;
}

void validate_snapshot(const BookSnapshot& s, std::size_t row) {
    if (s.bids.empty() || s.asks.empty()) throw Error(Errc::MalformedRow, "each side needs at least one level", row);
    for (std::size_t i = 0; i < s.bids.size(); ++i) {
        if (!(s.bids[i].size > 0.0) || !(s.bids[i].price > 0.0)) {
            throw Error(Errc::MalformedRow, "bid level with non-positive price or size", row);
        }
        if (i > 0 && !(s.bids[i].price < s.bids[i - 1].price)) {
            throw Error(Errc::MalformedRow, "bid prices must be strictly decreasing", row);
        }
    }
    for (std::size_t i = 0; i < s.asks.size(); ++i) {
        if (!(s.asks[i].size > 0.0) || !(s.asks[i].price > 0.0)) {
            throw Error(Errc::MalformedRow, "ask level with non-positive price or size", row);
        }
        if (i > 0 && !(s.asks[i].price > s.asks[i - 1].price)) {
            throw Error(Errc::MalformedRow, "ask prices must be strictly increasing", row);
        }
    }
    if (s.best_bid() >= s.best_ask()) throw Error(Errc::CrossedBook, "best bid >= best ask", row);
}

std::vector<BookSnapshot> load_book(const std::filesystem::path& path, BookCsvSchema schema) {
    auto in = open_or_throw(path);
    return parse_book(in, schema);
}

std::vector<BookSnapshot> parse_book(std::istream& in, BookCsvSchema schema) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::MalformedRow, "missing header", 0);
    const auto header = csv::split(csv::trim(line));
    // timestamp + 4 columns per depth level
    if (header.size() < 5 || (header.size() - 1) % 4 != 0 || header[0] != "timestamp") {
        throw Error(Errc::MalformedRow, "book header must be timestamp followed by 4*D level columns", 0);
    }
    const std::size_t depth = (header.size() - 1) / 4;
    for (std::size_t i = 0; i < depth; ++i) {
        const auto n = std::to_string(i + 1);
        if (header[1 + 2 * i] != "bid_px_" + n || header[2 + 2 * i] != "bid_sz_" + n ||
            header[1 + 2 * depth + 2 * i] != "ask_px_" + n || header[2 + 2 * depth + 2 * i] != "ask_sz_" + n) {
            throw Error(Errc::MalformedRow, "unexpected book column order", 0);
        }
    }

    auto read_side = [&](const std::vector<std::string>& f, std::size_t first, std::size_t row) {
        std::vector<PriceLevel> levels;
        bool ended = false;
        for (std::size_t i = 0; i < depth; ++i) {
            const auto& px = f[first + 2 * i];
            const auto& sz = f[first + 2 * i + 1];
            if (px.empty() && sz.empty()) {
                ended = true;
                continue;
            }
            if (ended || px.empty() || sz.empty()) throw Error(Errc::MalformedRow, "gap in book levels", row);
            const auto p = csv::parse_double(px);
            const auto s = csv::parse_double(sz);
            if (!p || !s) throw Error(Errc::MalformedRow, "unparseable level", row);
            levels.push_back({*p, *s});
        }
        return levels;
    };

    std::vector<BookSnapshot> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto trimmed = csv::trim(line);
        if (trimmed.empty()) continue;
        const auto fields = csv::split(trimmed);
        if (fields.size() != header.size()) throw Error(Errc::MalformedRow, "field count differs from header", row);
        const auto ts = csv::parse_int(fields[0]);
        if (!ts) throw Error(Errc::MalformedRow, "unparseable timestamp", row);

        BookSnapshot snap;
        snap.timestamp = to_seconds(*ts, schema.timestamps_ms);
        snap.bids = read_side(fields, 1, row);
        snap.asks = read_side(fields, 1 + 2 * depth, row);
        validate_snapshot(snap, row);
        if (!out.empty() && snap.timestamp < out.back().timestamp) {
            throw Error(Errc::NonMonotoneTimestamp, "timestamps must be non-decreasing", row);
        }
        out.push_back(std::move(snap));
    }
    return out;
}

void write_trades(std::ostream& out, const std::vector<TradeRecord>& trades) {
    out << "timestamp,price,size,side\n";
    for (const auto& t : trades) {
        out << t.timestamp << ',' << csv::format_double(t.price) << ',' << csv::format_double(t.size) << ','
            << (t.side == Side::BuyInitiated ? 'B' : 'S') << '\n';
    }
}

void write_book(std::ostream& out, const std::vector<BookSnapshot>& snapshots) {
    std::size_t depth = 1;
    for (const auto& s : snapshots) depth = std::max({depth, s.bids.size(), s.asks.size()});
    out << "timestamp";
    for (std::size_t i = 1; i <= depth; ++i) out << ",bid_px_" << i << ",bid_sz_" << i;
    for (std::size_t i = 1; i <= depth; ++i) out << ",ask_px_" << i << ",ask_sz_" << i;
    out << '\n';
    auto side = [&](const std::vector<PriceLevel>& levels) {
        for (std::size_t i = 0; i < depth; ++i) {
            if (i < levels.size()) {
                out << ',' << csv::format_double(levels[i].price) << ',' << csv::format_double(levels[i].size);
            } else {
                out << ",,";
            }
        }
    };
    for (const auto& s : snapshots) {
        out << s.timestamp;
        side(s.bids);
        side(s.asks);
        out << '\n';
    }
}

std::vector<Epoch> make_grid(Epoch start, Epoch interval, std::size_t count) {
    if (interval <= 0) throw Error(Errc::InvalidArgument, "grid interval must be positive");
    std::vector<Epoch> grid(count);
    for (std::size_t i = 0; i < count; ++i) grid[i] = start + static_cast<Epoch>(i) * interval;
    return grid;
}

namespace {

void check_uniform(const std::vector<Epoch>& grid, Epoch interval) {
    if (interval <= 0) throw Error(Errc::InvalidArgument, "interval must be positive");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] - grid[i - 1] != interval) throw Error(Errc::InvalidArgument, "grid is not uniform", i);
    }
}

}  // namespace

std::vector<FeatureVector> compute_trade_features(const std::vector<TradeRecord>& trades, Market market,
                                                  Epoch interval, const std::vector<Epoch>& grid) {
    check_uniform(grid, interval);
    std::vector<FeatureVector> out;
    out.reserve(grid.size());

    auto it = trades.begin();
    for (const Epoch start : grid) {
        const Epoch end = start + interval;
        while (it != trades.end() && it->timestamp < start) ++it;
        double buy_vol = 0.0, sell_vol = 0.0;
        std::size_t buys = 0, sells = 0;
        for (; it != trades.end() && it->timestamp < end; ++it) {
            if (it->side == Side::BuyInitiated) {
                buy_vol += it->size;
                ++buys;
            } else {
                sell_vol += it->size;
                ++sells;
            }
        }
        const auto nb = static_cast<double>(buys);
        const auto ns = static_cast<double>(sells);
        out.push_back({{market, Kind::Transactions},
                       start,
                       {buy_vol, sell_vol, std::abs(buy_vol - sell_vol), nb, ns, std::abs(nb - ns)}});
    }
    return out;
}

std::size_t slope_depth(std::size_t levels, double fraction) noexcept {
    if (levels == 0) return 0;
    // small slack so 0.07 * 100 = 7.000000000000001 still means 7 levels
    const double raw = fraction * static_cast<double>(levels);
    auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::clamp<std::size_t>(k, 1, levels);
}

double side_slope(const std::vector<PriceLevel>& side, double fraction) noexcept {
    const std::size_t k = slope_depth(side.size(), fraction);
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += side[i].size;
    return acc;
}

FeatureVector compute_book_features(const BookSnapshot& s, Market market, const std::array<double, 3>& fractions) {
    double ask_vol = 0.0, bid_vol = 0.0;
    for (const auto& l : s.asks) ask_vol += l.size;
    for (const auto& l : s.bids) bid_vol += l.size;

    FeatureVector fv{{market, Kind::OrderBook}, s.timestamp, {}};
    fv.values.reserve(kBookFeatureDim);
    fv.values.push_back(s.spread());
    fv.values.push_back(ask_vol);
    fv.values.push_back(bid_vol);
    fv.values.push_back(std::abs(ask_vol - bid_vol));
    std::array<double, 3> ask_slope{}, bid_slope{};
    for (std::size_t i = 0; i < 3; ++i) {
        ask_slope[i] = side_slope(s.asks, fractions[i]);
        bid_slope[i] = side_slope(s.bids, fractions[i]);
    }
    for (double v : ask_slope) fv.values.push_back(v);
    for (double v : bid_slope) fv.values.push_back(v);
    for (std::size_t i = 0; i < 3; ++i) fv.values.push_back(std::abs(ask_slope[i] - bid_slope[i]));
    return fv;
}

std::vector<BookSnapshot> latest_snapshot_per_interval(const std::vector<BookSnapshot>& snapshots,
                                                       const std::vector<Epoch>& grid, Epoch interval) {
    check_uniform(grid, interval);
    std::vector<BookSnapshot> out;
    out.reserve(grid.size());
    std::size_t next = 0;
    const BookSnapshot* current = nullptr;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const Epoch end = grid[g] + interval;
        while (next < snapshots.size() && snapshots[next].timestamp < end) current = &snapshots[next++];
        if (current == nullptr) {
            throw Error(Errc::NoSnapshotBeforeGridStart, "no book snapshot before end of grid interval", g);
        }
        out.push_back(*current);
    }
    return out;
}

std::vector<FeatureVector> compute_book_features_on_grid(const std::vector<BookSnapshot>& snapshots, Market market,
                                                         const std::vector<Epoch>& grid, Epoch interval) {
    const auto snaps = latest_snapshot_per_interval(snapshots, grid, interval);
    std::vector<FeatureVector> out;
    out.reserve(snaps.size());
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        out.push_back(compute_book_features(snaps[i], market));
        out.back().interval_start = grid[i];
    }
    return out;
}

void write_features(std::ostream& out, const std::vector<FeatureVector>& features) {
    out << "interval_start,source,market";
    for (std::size_t i = 1; i <= kBookFeatureDim; ++i) out << ",f_" << i;
    out << '\n';
    for (const auto& f : features) {
        out << f.interval_start << ',' << to_string(f.source.kind) << ',' << to_string(f.source.market);
        for (std::size_t i = 0; i < kBookFeatureDim; ++i) {
            out << ',';
            if (i < f.values.size()) out << csv::format_double(f.values[i]);
        }
        out << '\n';
    }
}

std::vector<FeatureVector> read_features(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::MalformedRow, "missing header", 0);
    const auto header = csv::split(csv::trim(line));
    if (header.size() != 3 + kBookFeatureDim || header[0] != "interval_start") {
        throw Error(Errc::MalformedRow, "unexpected feature header", 0);
    }
    std::vector<FeatureVector> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto trimmed = csv::trim(line);
        if (trimmed.empty()) continue;
        const auto f = csv::split(trimmed);
        if (f.size() != header.size()) throw Error(Errc::MalformedRow, "field count differs from header", row);
        FeatureVector fv;
        const auto ts = csv::parse_int(f[0]);
        if (!ts) throw Error(Errc::MalformedRow, "unparseable timestamp", row);
        fv.interval_start = *ts;
        try {
            fv.source = {parse_market(f[2]), parse_kind(f[1])};
        } catch (const Error& e) {
            throw Error(Errc::MalformedRow, e.what(), row);
        }
        const std::size_t dim = feature_dim(fv.source.kind);
        for (std::size_t i = 0; i < dim; ++i) {
            const auto v = csv::parse_double(f[3 + i]);
            if (!v) throw Error(Errc::MalformedRow, "unparseable feature value", row);
            fv.values.push_back(*v);
        }
        out.push_back(std::move(fv));
    }
    return out;
}

}  // namespace volmix::market_data
