#pragma once

#include "volmix/common.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace volmix::market_data {

enum class Side { BuyInitiated, SellInitiated };

struct TradeRecord {
    Epoch timestamp = 0;
    double price = 0.0;
    double size = 0.0;
    Side side = Side::BuyInitiated;

    friend bool operator==(const TradeRecord&, const TradeRecord&) = default;
};

struct PriceLevel {
    double price = 0.0;
    double size = 0.0;

    friend bool operator==(const PriceLevel&, const PriceLevel&) = default;
};

/// Order book state. Bids strictly decreasing in price, asks strictly
/// increasing, best bid below best ask.
struct BookSnapshot {
    Epoch timestamp = 0;
    std::vector<PriceLevel> bids;
    std::vector<PriceLevel> asks;

    [[nodiscard]] double best_bid() const { return bids.front().price; }
    [[nodiscard]] double best_ask() const { return asks.front().price; }
    [[nodiscard]] double spread() const { return best_ask() - best_bid(); }

    friend bool operator==(const BookSnapshot&, const BookSnapshot&) = default;
};

enum class Market { Target, External };
enum class Kind { Transactions, OrderBook };

struct SourceId {
    Market market = Market::Target;
    Kind kind = Kind::Transactions;

    friend bool operator==(const SourceId&, const SourceId&) = default;
};

/// The four sources in canonical order: target transactions, target book,
/// external transactions, external book.
inline constexpr std::array<SourceId, 4> kAllSources{{
    {Market::Target, Kind::Transactions},
    {Market::Target, Kind::OrderBook},
    {Market::External, Kind::Transactions},
    {Market::External, Kind::OrderBook},
}};

inline constexpr std::size_t kTradeFeatureDim = 6;
inline constexpr std::size_t kBookFeatureDim = 13;

[[nodiscard]] constexpr std::size_t feature_dim(Kind kind) noexcept {
    return kind == Kind::Transactions ? kTradeFeatureDim : kBookFeatureDim;
}

[[nodiscard]] std::string to_string(Market m);
[[nodiscard]] std::string to_string(Kind k);
[[nodiscard]] Market parse_market(const std::string& s);
[[nodiscard]] Kind parse_kind(const std::string& s);

struct FeatureVector {
    SourceId source;
    Epoch interval_start = 0;
    std::vector<double> values;
};

struct TradeCsvSchema {
    /// Timestamps are integer milliseconds; converted to seconds (floor) on load.
    bool timestamps_ms = false;
};

struct BookCsvSchema {
    bool timestamps_ms = false;
};

// Loaders. Row numbers in errors are 1-based data rows (header excluded).
[[nodiscard]] std::vector<TradeRecord> load_trades(const std::filesystem::path& path, TradeCsvSchema schema = {});
[[nodiscard]] std::vector<TradeRecord> parse_trades(std::istream& in, TradeCsvSchema schema = {});
[[nodiscard]] std::vector<BookSnapshot> load_book(const std::filesystem::path& path, BookCsvSchema schema = {});
[[nodiscard]] std::vector<BookSnapshot> parse_book(std::istream& in, BookCsvSchema schema = {});

void write_trades(std::ostream& out, const std::vector<TradeRecord>& trades);
/// Writes a fixed-depth book file; depth is the deepest side over all snapshots.
void write_book(std::ostream& out, const std::vector<BookSnapshot>& snapshots);

/// Uniform grid of interval start times: start, start+interval, ... (count entries).
[[nodiscard]] std::vector<Epoch> make_grid(Epoch start, Epoch interval, std::size_t count);

/// Per-interval transaction features:
/// (buy volume, sell volume, |buy-sell| volume, buy count, sell count, |buy-sell| count).
/// Intervals are half-open [g, g+interval). Empty intervals yield zeros.
[[nodiscard]] std::vector<FeatureVector> compute_trade_features(const std::vector<TradeRecord>& trades, Market market,
                                                                Epoch interval, const std::vector<Epoch>& grid);

inline constexpr std::array<double, 3> kSlopeFractions{0.01, 0.05, 0.10};

/// Number of levels from the best price that make up at least `fraction` of
/// the levels on one side (ceiling, minimum one).
[[nodiscard]] std::size_t slope_depth(std::size_t levels, double fraction) noexcept;

/// Cumulative size over the first slope_depth() levels of one side.
[[nodiscard]] double side_slope(const std::vector<PriceLevel>& side, double fraction) noexcept;

/// 13 book features in fixed order: spread, ask volume, bid volume,
/// |ask-bid| volume, ask slope x3, bid slope x3, |ask-bid| slope x3.
[[nodiscard]] FeatureVector compute_book_features(const BookSnapshot& snapshot, Market market,
                                                  const std::array<double, 3>& fractions = kSlopeFractions);

/// For each grid interval [g, g+interval), the last snapshot strictly before
/// the interval end; intervals without one carry the previous snapshot forward.
[[nodiscard]] std::vector<BookSnapshot> latest_snapshot_per_interval(const std::vector<BookSnapshot>& snapshots,
                                                                     const std::vector<Epoch>& grid, Epoch interval);

/// Book features of latest_snapshot_per_interval, stamped with the grid times.
[[nodiscard]] std::vector<FeatureVector> compute_book_features_on_grid(const std::vector<BookSnapshot>& snapshots,
                                                                       Market market, const std::vector<Epoch>& grid,
                                                                       Epoch interval);

/// Checks the BookSnapshot invariants; throws CrossedBook or MalformedRow.
void validate_snapshot(const BookSnapshot& snapshot, std::size_t row);

/// Feature CSV: interval_start,source,market,f_1..f_13 (transactions leave f_7..f_13 empty).
void write_features(std::ostream& out, const std::vector<FeatureVector>& features);
[[nodiscard]] std::vector<FeatureVector> read_features(std::istream& in);

}  // namespace volmix::market_data
