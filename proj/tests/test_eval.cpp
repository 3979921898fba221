#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace dscg;
using namespace fixtures;

namespace {

const std::vector<double> kTau{0.5, 1.0, 2.0, 3.0};

EvalRecord rec_with_error(const std::string& id, double err, double completeness = 0.5) {
    return make_record(id, {err, 0}, {{0, 0}}, completeness, kTau);
}

std::vector<EvalRecord> random_records(Rng& rng, std::size_t n) {
    std::vector<EvalRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Position> inst;
        const int k = rng.uniform_int(1, 3);
        for (int j = 0; j < k; ++j) inst.push_back({rng.uniform(0, 8), rng.uniform(0, 6)});
        out.push_back(make_record("r" + std::to_string(i), {rng.uniform(0, 8), rng.uniform(0, 6)}, inst,
                                  rng.uniform(0.01, 1.0), kTau, rng.uniform(0, 2)));
    }
    return out;
}

} // namespace

TEST(Lsr, SingleRecordWithinThreshold) {
    EXPECT_EQ(lsr({make_record("a", {0.5, 0}, {{0, 0}}, 1.0, {1.0})}, 1.0), 1.0);
}

TEST(Lsr, TwoRecordsHalfSucceed) {
    EXPECT_EQ(lsr({rec_with_error("a", 0.5), rec_with_error("b", 1.5)}, 1.0), 0.5);
}

TEST(Lsr, EmptyIsContractError) { EXPECT_THROW(lsr({}, 1.0), ContractError); }

TEST(Lsr, MonotoneInThreshold) {
    Rng rng(1);
    const auto recs = random_records(rng, 100);
    double prev = 0;
    for (double t = 0; t <= 10; t += 0.05) {
        const double v = lsr(recs, t);
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_EQ(prev, 1.0);
}

TEST(Record, SuccessIffErrorWithinThresholdAndClosestInstanceUsed) {
    const auto r = make_record("x", {0, 0}, {{3, 4}, {0, 1}, {1, 0}}, 0.4, kTau);
    EXPECT_EQ(r.error, 1.0);
    EXPECT_EQ(r.success, (std::vector<bool>{false, true, true, true}));
    EXPECT_EQ(closest_instance({0, 0}, {{3, 4}, {0, 1}, {1, 0}}).first, 1u);
    EXPECT_THROW(make_record("x", {0, 0}, {}, 0.4, kTau), ContractError);
}

TEST(Msle, MeanOverSuccesses) {
    EXPECT_NEAR(*msle({rec_with_error("a", 0.2), rec_with_error("b", 0.4), rec_with_error("c", 2.0)}, 1.0), 0.3, 1e-15);
    EXPECT_EQ(*msle({rec_with_error("a", 0.2), rec_with_error("b", 0.4)}, 1.0), (0.2 + 0.4) / 2);
}

TEST(Msle, SingleExactSuccessIsZero) { EXPECT_EQ(*msle({rec_with_error("a", 0.0)}, 1.0), 0.0); }

TEST(Msle, NoSuccessIsAbsentNotZero) {
    EXPECT_FALSE(msle({rec_with_error("a", 1.5)}, 1.0).has_value());
    const auto rep = report_from_records({rec_with_error("a", 5.0)}, kTau, uniform_edges(0.1));
    EXPECT_TRUE(to_json(rep)["msle"]["0.5"].is_null());
}

TEST(Msle, NeverExceedsThreshold) {
    Rng rng(2);
    const auto recs = random_records(rng, 200);
    for (double t : {0.25, 0.5, 1.0, 2.0, 3.0}) {
        const auto m = msle(recs, t);
        if (m) {
            EXPECT_LE(*m, t);
        }
    }
}

TEST(Mppe, ExactMagnitudesGiveZero) {
    EXPECT_EQ(mppe({{3, 4}, {0, -2}}, {0, 0}, {{-3, -4}, {0, 2}}), 0.0);
    // Only the length of the offset matters.
    EXPECT_EQ(mppe({{-5, 0}}, {0, 0}, {{3, 4}}), 0.0);
}

TEST(Mppe, SingleObjectLengthDifference) { EXPECT_EQ(mppe({{2, 0}}, {3, 0}, {{0, 0}}), 1.0); }

TEST(Mppe, MisalignedIsContractError) { EXPECT_THROW(mppe({{1, 0}}, {0, 0}, {{1, 1}, {2, 2}}), ContractError); }

TEST(Bins, BoundaryFallsInLowerHalfOpenBin) {
    const std::vector<EvalRecord> recs{rec_with_error("a", 0.1, 0.5), rec_with_error("b", 0.9, 0.5)};
    const auto bins = bin_by_completeness(recs, {0, 0.5, 1}, kTau);
    ASSERT_EQ(bins.size(), 2u);
    EXPECT_EQ(bins[0].count, 2u);
    EXPECT_EQ(bins[1].count, 0u);
}

TEST(Bins, EmptyBinHasNoAggregates) {
    const auto bins = bin_by_completeness({rec_with_error("a", 0.1, 0.95)}, uniform_edges(0.1), kTau);
    ASSERT_EQ(bins.size(), 10u);
    EXPECT_EQ(bins[0].count, 0u);
    EXPECT_TRUE(bins[0].lsr.empty());
    EXPECT_FALSE(bins[0].mae);
    EXPECT_EQ(bins[9].count, 1u);
    EXPECT_EQ(*bins[9].mae, 0.1);
}

TEST(Bins, MaeAndLsrMatchDirectSummation) {
    Rng rng(3);
    const auto recs = random_records(rng, 300);
    const auto edges = uniform_edges(0.2);
    const auto bins = bin_by_completeness(recs, edges, kTau);
    std::size_t total = 0;
    for (std::size_t b = 0; b < bins.size(); ++b) {
        double sum = 0;
        std::size_t n = 0, ok1 = 0;
        for (const auto& r : recs)
            if (r.completeness > edges[b] && r.completeness <= edges[b + 1]) {
                sum += r.error;
                ++n;
                ok1 += r.error <= 1.0;
            }
        EXPECT_EQ(bins[b].count, n);
        total += n;
        if (n) {
            EXPECT_NEAR(*bins[b].mae, sum / static_cast<double>(n), 1e-12);
            EXPECT_EQ(bins[b].lsr[1], static_cast<double>(ok1) / static_cast<double>(n));
        }
    }
    EXPECT_EQ(total, recs.size());
}

TEST(Bins, InvalidInputsAreValidationErrors) {
    EXPECT_THROW(bin_by_completeness({rec_with_error("a", 0.1, 0.0)}, {0, 1}, kTau), ValidationError);
    EXPECT_THROW(bin_by_completeness({rec_with_error("a", 0.1, 1.2)}, {0, 1}, kTau), ValidationError);
    EXPECT_THROW(bin_by_completeness({}, {0, 0.6, 0.5, 1}, kTau), ValidationError);
    EXPECT_THROW(bin_by_completeness({}, {0.1, 1}, kTau), ValidationError);
    EXPECT_THROW(bin_by_completeness({}, {0, 0.9}, kTau), ValidationError);
    EXPECT_THROW(uniform_edges(0), ValidationError);
}

TEST(Bins, UniformEdges) {
    const auto e = uniform_edges(0.25);
    EXPECT_EQ(e, (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
    EXPECT_EQ(uniform_edges(0.1).size(), 11u);
    EXPECT_EQ(uniform_edges(0.1).back(), 1.0);
}

TEST(CentroidBaseline, Examples) {
    PartialScene s{"c", 2, {{0, "a", {0, 0}}, {1, "b", {2, 0}}}, "t", {{1, 1}}, 0.5};
    EXPECT_EQ(centroid_baseline(s), (Position{1, 0}));
    s.observed.pop_back();
    EXPECT_EQ(centroid_baseline(s), (Position{0, 0}));
    s.observed.clear();
    EXPECT_THROW(centroid_baseline(s), ContractError);
}

TEST(Report, RecomputedFromSerialisedRecordsIsIdentical) {
    Rng rng(4);
    const auto rep = report_from_records(random_records(rng, 50), kTau, uniform_edges(0.1));
    const auto j = to_json(rep);
    std::vector<EvalRecord> back;
    const auto parsed = nlohmann::json::parse(j.dump());
    for (const auto& r : parsed["records"]) back.push_back(eval_record_from_json(r));
    EXPECT_EQ(back, rep.records);
    EXPECT_EQ(to_json(report_from_records(back, kTau, uniform_edges(0.1))).dump(), j.dump());
}

TEST(Report, CsvShapes) {
    Rng rng(5);
    const auto rep = report_from_records(random_records(rng, 7), kTau, uniform_edges(0.1));
    const auto rows = records_csv(rep);
    EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 8);
    EXPECT_EQ(rows.substr(0, rows.find('\n')), "scene_id,completeness,error,pred_x,pred_y,success@0.5,success@1,success@2,success@3,mppe");
    const auto bins = bins_csv(rep);
    EXPECT_EQ(std::count(bins.begin(), bins.end(), '\n'), 11);
    EXPECT_EQ(bins.substr(0, bins.find('\n')), "lo,hi,count,lsr@0.5,lsr@1,lsr@2,lsr@3,mae");
}

TEST(Evaluate, ParallelMatchesSerialAndReportsAllThresholds) {
    const auto test = scenes(12, 31);
    const ModelParams m = init_model(small_config(), 3);
    const auto a = evaluate(test, bundled_kb(), m, kTau, uniform_edges(0.1), 1);
    const auto b = evaluate(test, bundled_kb(), m, kTau, uniform_edges(0.1), 4);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_EQ(a.records.size(), test.size());
    const auto j = to_json(a);
    for (const char* k : {"0.5", "1", "2", "3"}) EXPECT_TRUE(j["lsr"].contains(k)) << k;
    ASSERT_TRUE(a.baseline_lsr);
    for (std::size_t i = 0; i < test.size(); ++i) {
        EXPECT_EQ(a.records[i].scene_id, test[i].scene_id);
        EXPECT_TRUE(a.records[i].mppe);
    }
}

TEST(Evaluate, MppeUsesInstanceClosestToPrediction) {
    const auto sc = scenes(1, 32)[0];
    const ModelParams m = init_model(small_config(), 4);
    const auto rec = evaluate_scene(sc, bundled_kb(), m, kTau);
    const Prediction p = predict(sc, bundled_kb(), m);
    const auto k = closest_instance(p.position, sc.target_instances).first;
    double want = 0;
    for (std::size_t i = 0; i < p.relpos.size(); ++i) {
        const double len = std::hypot(p.relpos[i][0], p.relpos[i][1]);
        want += std::abs(len - distance(sc.target_instances[k], p.observed_positions[i]));
    }
    EXPECT_NEAR(*rec.mppe, want / static_cast<double>(p.relpos.size()), 1e-12);
}

TEST(Evaluate, UnlabelledSceneIsContractError) {
    auto test = scenes(2, 33);
    test[1].target_instances.clear();
    EXPECT_THROW(evaluate(test, bundled_kb(), init_model(small_config(), 1), kTau, uniform_edges(0.1)), ContractError);
}
