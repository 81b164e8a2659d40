#include "volmix/market_data.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace volmix;
using namespace volmix::market_data;

namespace {

std::vector<TradeRecord> trades_from(const std::string& body) {
    std::istringstream in("timestamp,price,size,side\n" + body);
    return parse_trades(in);
}

Errc error_code(const auto& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::InvalidArgument;
}

BookSnapshot book(Epoch t, std::vector<PriceLevel> bids, std::vector<PriceLevel> asks) {
    return {t, std::move(bids), std::move(asks)};
}

}  // namespace

TEST(LoadTrades, EmptyFileWithHeader) { EXPECT_TRUE(trades_from("").empty()); }

TEST(LoadTrades, FieldMapping) {
    const auto t = trades_from("1527804900,7500.0,0.5,B\n");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0], (TradeRecord{1527804900, 7500.0, 0.5, Side::BuyInitiated}));
}

TEST(LoadTrades, NonMonotoneTimestampReportsRow) {
    try {
        (void)trades_from("10,1,1,B\n5,1,1,S\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NonMonotoneTimestamp);
        EXPECT_EQ(e.position(), 2u);
    }
}

TEST(LoadTrades, RejectsBadRows) {
    EXPECT_EQ(error_code([] { (void)trades_from("10,1,0,B\n"); }), Errc::NonPositiveSize);
    EXPECT_EQ(error_code([] { (void)trades_from("10,1,1,X\n"); }), Errc::MalformedRow);
    EXPECT_EQ(error_code([] { (void)trades_from("10,abc,1,B\n"); }), Errc::MalformedRow);
}

TEST(LoadTrades, MillisecondTimestamps) {
    std::istringstream in("timestamp,price,size,side\n1527804900123,7500,1,S\n");
    const auto t = parse_trades(in, {true});
    EXPECT_EQ(t[0].timestamp, 1527804900);
    EXPECT_EQ(t[0].side, Side::SellInitiated);
}

TEST(LoadBook, ValidSnapshotAndSpread) {
    std::istringstream in("timestamp,bid_px_1,bid_sz_1,ask_px_1,ask_sz_1\n5,99,1,101,2\n");
    const auto b = parse_book(in);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_DOUBLE_EQ(b[0].spread(), 2.0);
}

TEST(LoadBook, CrossedBook) {
    std::istringstream in("timestamp,bid_px_1,bid_sz_1,ask_px_1,ask_sz_1\n5,101,1,100,1\n");
    EXPECT_EQ(error_code([&] { (void)parse_book(in); }), Errc::CrossedBook);
}

TEST(LoadBook, OrderPreservedAndMissingLevels) {
    std::istringstream in(
        "timestamp,bid_px_1,bid_sz_1,bid_px_2,bid_sz_2,ask_px_1,ask_sz_1,ask_px_2,ask_sz_2\n"
        "1,99,1,98,1,101,1,102,1\n"
        "2,99,1,,,101,1,102,3\n"
        "3,99,2,98,2,101,1,,\n");
    const auto b = parse_book(in);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_EQ(b[0].timestamp, 1);
    EXPECT_EQ(b[1].bids.size(), 1u);
    EXPECT_EQ(b[2].asks.size(), 1u);
}

TEST(LoadBook, WriteParseRoundTrip) {
    std::vector<BookSnapshot> snaps{book(1, {{99, 1}, {98, 2}}, {{101, 3}}), book(2, {{99.5, 1}}, {{100.5, 1}, {101, 4}})};
    std::stringstream io;
    write_book(io, snaps);
    EXPECT_EQ(parse_book(io), snaps);
}

TEST(TradeFeatures, Arithmetic) {
    const std::vector<TradeRecord> t{{0, 1, 0.5, Side::BuyInitiated}, {10, 1, 0.5, Side::BuyInitiated},
                                     {20, 1, 0.3, Side::SellInitiated}};
    const auto f = compute_trade_features(t, Market::Target, 60, make_grid(0, 60, 2));
    ASSERT_EQ(f.size(), 2u);
    const std::vector<double> expect{1.0, 0.3, 0.7, 2, 1, 1};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(f[0].values[i], expect[i], 1e-15);
    EXPECT_EQ(f[1].values, std::vector<double>(6, 0.0));
}

TEST(TradeFeatures, SymmetricTrades) {
    const std::vector<TradeRecord> t{{0, 1, 1.0, Side::BuyInitiated}, {1, 1, 1.0, Side::SellInitiated}};
    const auto f = compute_trade_features(t, Market::Target, 60, make_grid(0, 60, 1));
    EXPECT_EQ(f[0].values[2], 0.0);
    EXPECT_EQ(f[0].values[5], 0.0);
}

TEST(TradeFeatures, BoundaryTradeGoesToLaterInterval) {
    const std::vector<TradeRecord> t{{60, 1, 1.0, Side::BuyInitiated}};
    const auto f = compute_trade_features(t, Market::Target, 60, make_grid(0, 60, 2));
    EXPECT_EQ(f[0].values[0], 0.0);
    EXPECT_EQ(f[1].values[0], 1.0);
}

TEST(TradeFeatures, VolumeConservationAndImbalanceBounds) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> size(0.01, 2.0);
    std::bernoulli_distribution buy(0.4);
    std::vector<TradeRecord> t;
    for (Epoch ts = 0; ts < 600; ts += 7) {
        t.push_back({ts, 100, size(rng), buy(rng) ? Side::BuyInitiated : Side::SellInitiated});
    }
    const auto grid = make_grid(0, 60, 10);
    const auto f = compute_trade_features(t, Market::Target, 60, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double total = 0.0;
        for (const auto& r : t) {
            if (r.timestamp >= grid[i] && r.timestamp < grid[i] + 60) total += r.size;
        }
        EXPECT_DOUBLE_EQ(f[i].values[0] + f[i].values[1], total);
        EXPECT_LE(f[i].values[2], f[i].values[0] + f[i].values[1]);
        EXPECT_LE(f[i].values[5], f[i].values[3] + f[i].values[4]);
    }
}

TEST(BookFeatures, DegenerateBook) {
    const auto f = compute_book_features(book(0, {{99, 2}}, {{101, 3}}), Market::Target);
    const std::vector<double> expect{2, 3, 2, 1, 3, 3, 3, 2, 2, 2, 1, 1, 1};
    EXPECT_EQ(f.values, expect);
}

TEST(BookFeatures, SymmetricBookHasNoImbalance) {
    const auto f = compute_book_features(book(0, {{99, 1}, {98, 2}, {97, 5}}, {{101, 1}, {102, 2}, {103, 5}}),
                                         Market::External);
    EXPECT_EQ(f.values[3], 0.0);
    for (int i = 10; i < 13; ++i) EXPECT_EQ(f.values[i], 0.0);
}

TEST(BookFeatures, HundredLevelSlope) {
    std::vector<PriceLevel> asks, bids{{99, 1}};
    for (int i = 0; i < 100; ++i) asks.push_back({101.0 + i, 1.0});
    const auto f = compute_book_features(book(0, bids, asks), Market::Target);
    // brute force: count levels until at least 5% of 100 are included
    double slope = 0.0;
    std::size_t included = 0;
    while (static_cast<double>(included) < 0.05 * 100) slope += asks[included++].size;
    EXPECT_DOUBLE_EQ(f.values[5], slope);
    EXPECT_DOUBLE_EQ(f.values[5], 5.0);
}

TEST(BookFeatures, SlopeNonDecreasingAndDeterministic) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> sz(0.1, 3.0);
    std::uniform_int_distribution<int> levels(1, 60);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<PriceLevel> bids, asks;
        const int nb = levels(rng), na = levels(rng);
        for (int i = 0; i < nb; ++i) bids.push_back({99.0 - i, sz(rng)});
        for (int i = 0; i < na; ++i) asks.push_back({101.0 + i, sz(rng)});
        const auto snap = book(0, bids, asks);
        const auto f = compute_book_features(snap, Market::Target);
        EXPECT_LE(f.values[4], f.values[5]);
        EXPECT_LE(f.values[5], f.values[6]);
        EXPECT_LE(f.values[7], f.values[8]);
        EXPECT_LE(f.values[8], f.values[9]);
        EXPECT_EQ(f.values, compute_book_features(snap, Market::Target).values);
        for (double v : f.values) EXPECT_GE(v, 0.0);
    }
}

TEST(LatestSnapshot, NoSnapshotBeforeFirstInterval) {
    const std::vector<BookSnapshot> s{book(1, {{99, 1}}, {{101, 1}}), book(2, {{99, 2}}, {{101, 1}}),
                                      book(9, {{99, 3}}, {{101, 1}})};
    EXPECT_EQ(error_code([&] { (void)latest_snapshot_per_interval(s, make_grid(0, 1, 3), 1); }),
              Errc::NoSnapshotBeforeGridStart);
    const auto r = latest_snapshot_per_interval(s, make_grid(1, 1, 4), 1);
    EXPECT_EQ(r[0].timestamp, 1);
    // [2,3) holds t=2, then the gap carries it forward
    EXPECT_EQ(r[1].timestamp, 2);
    EXPECT_EQ(r[2], r[1]);
    EXPECT_EQ(r[3], r[1]);
}

TEST(LatestSnapshot, BoundarySnapshotBelongsToNextInterval) {
    const std::vector<BookSnapshot> s{book(0, {{99, 1}}, {{101, 1}}), book(60, {{99, 2}}, {{101, 1}})};
    const auto r = latest_snapshot_per_interval(s, make_grid(0, 60, 2), 60);
    EXPECT_EQ(r[0].timestamp, 0);
    EXPECT_EQ(r[1].timestamp, 60);
}

TEST(FeatureCsv, RoundTrip) {
    std::vector<FeatureVector> fv{compute_book_features(book(60, {{99, 2}}, {{101, 3}}), Market::External)};
    fv[0].interval_start = 60;
    const auto tf = compute_trade_features({{0, 1, 0.25, Side::BuyInitiated}}, Market::Target, 60, make_grid(0, 60, 1));
    fv.insert(fv.begin(), tf.begin(), tf.end());
    std::stringstream io;
    write_features(io, fv);
    const auto back = read_features(io);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].source, (SourceId{Market::Target, Kind::Transactions}));
    EXPECT_EQ(back[0].values, fv[0].values);
    EXPECT_EQ(back[1].source, (SourceId{Market::External, Kind::OrderBook}));
    EXPECT_EQ(back[1].values, fv[1].values);
}

TEST(Sources, FourDistinctSources) {
    EXPECT_EQ(kAllSources.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) EXPECT_FALSE(kAllSources[i] == kAllSources[j]);
    }
    EXPECT_EQ(feature_dim(Kind::Transactions), 6u);
    EXPECT_EQ(feature_dim(Kind::OrderBook), 13u);
}
