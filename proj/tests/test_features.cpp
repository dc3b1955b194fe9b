#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stsm/features.hpp"

using namespace stsm;

namespace {

PoiRecord poi_at(double x, double y, int category, double levels = 0.0, double area = 0.0) {
    PoiRecord r;
    r.x = x;
    r.y = y;
    r.category = category;
    r.levels = levels;
    r.area_m2 = area;
    return r;
}

Location loc_at(const std::string& id, double x, double y, int road = -1) {
    Location l;
    l.id = id;
    l.x = x;
    l.y = y;
    l.nearest_road = road;
    return l;
}

}  // namespace

TEST_CASE("poi region embedding counts categories inside the radius") {
    PoiTable poi{poi_at(10, 0, 3, 2.0, 50.0), poi_at(30, 0, 3), poi_at(0, 150, 7, 1.0, 0.0)};
    RegionFeatures f = poi_region_embedding(loc_at("s", 0, 0), poi, 100.0);
    CHECK(f.poi_counts.size() == 26);
    CHECK(f.poi_counts[2] == 2.0);
    CHECK(f.poi_counts[6] == 0.0);  // outside radius
    CHECK(f.scale == doctest::Approx(52.0).epsilon(1e-12));

    CHECK_THROWS_AS(poi_region_embedding(loc_at("s", 0, 0), poi, 0.0), ConfigError);
    PoiTable bad{poi_at(0, 0, 27)};
    CHECK_THROWS_AS(poi_region_embedding(loc_at("s", 0, 0), bad, 100.0), InputError);
}

TEST_CASE("location embedding concatenates to 31 dims") {
    std::vector<double> region(27, 0.5), road(4, 1.0);
    auto e = location_embedding(region, road);
    CHECK(e.size() == 31);
    CHECK(e[26] == 0.5);
    CHECK(e[27] == 1.0);
    CHECK_THROWS_AS(location_embedding(std::vector<double>(26, 0.0), road), InternalError);
}

TEST_CASE("built embeddings are min-max scaled per dimension") {
    PoiTable poi{poi_at(0, 0, 1, 5.0, 0.0), poi_at(0, 0, 1), poi_at(1000, 0, 2, 10.0, 0.0)};
    RoadTable roads;
    roads.push_back({"a", 2, 80, 0, 3});
    roads.push_back({"b", 1, 50, 1, 2});
    std::vector<Location> locs{loc_at("a", 0, 0, 0), loc_at("b", 1000, 0, 1)};
    auto emb = build_location_embeddings(locs, poi, roads, 100.0);
    REQUIRE(emb.size() == 2);
    for (const auto& v : emb) {
        CHECK(v.size() == 31);
        for (double x : v) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
    // location a sees two category-1 POIs, b sees none: after scaling 1 vs 0
    CHECK(emb[0][0] == 1.0);
    CHECK(emb[1][0] == 0.0);
    // category 2 only near b
    CHECK(emb[0][1] == 0.0);
    CHECK(emb[1][1] == 1.0);
    // scale: a has 5, b has 10 (max): scaled 0 and 1
    CHECK(emb[0][26] == 0.0);
    CHECK(emb[1][26] == 1.0);
}

TEST_CASE("subgraph embedding is the member mean") {
    std::vector<std::vector<double>> members{{1.0, 2.0}, {3.0, 6.0}};
    auto m = subgraph_embedding(members);
    CHECK(m[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK_THROWS_AS(subgraph_embedding({}), InputError);
}

TEST_CASE("cosine similarity oracles") {
    CHECK(cosine_similarity({1, 0}, {2, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity({1, 0}, {0, 5}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_similarity({1, 1}, {-1, -1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(cosine_similarity({0, 0}, {1, 2}) == 0.0);
}

TEST_CASE("proximity scores scale as inverse distance with a 1 m floor") {
    std::vector<Location> locs{loc_at("a", 100, 0), loc_at("b", 1000, 0), loc_at("c", 0.5, 0)};
    std::vector<std::vector<double>> embs(3, std::vector<double>{1.0});
    SimilarityScores s = similarity_scores(embs, {1.0}, locs, {0, 1, 2}, 0.0, 0.0);
    CHECK(s.sp_sg[0] / s.sp_sg[1] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(s.sp_sg[2] == 1.0);  // 0.5 m floored to 1 m
    for (double v : s.s_sg) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masking probability oracle") {
    // S = [0.8, 0.4], SP = [0.1, 0.3], delta_ms = 0.2, K = 2
    auto p = masking_probabilities({0.8, 0.4}, {0.1, 0.3}, 0.2, 1.0, 2);
    CHECK(p[0] == doctest::Approx(11.0 / 60.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(13.0 / 60.0).epsilon(1e-12));
    CHECK((p[0] + p[1]) / 2.0 == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("uniform scores with full K give mean probability delta_ms exactly") {
    const int n = 37;
    std::vector<double> s(n, 0.42), sp(n, 0.007);
    const double delta_m = 0.3, delta_s = 1.5;
    auto p = masking_probabilities(s, sp, delta_m, delta_s, n);
    for (double v : p) CHECK(std::abs(v - delta_m / delta_s) < 1e-12);
}

TEST_CASE("top-K zeroes the lower similarities") {
    // with K=1 only the 0.8 similarity survives; 0.4 contributes solely via SP
    auto p = masking_probabilities({0.8, 0.4}, {0.2, 0.2}, 0.2, 1.0, 1);
    // mean_s = 0.4, mean_sp = 0.2
    CHECK(p[0] == doctest::Approx((0.8 * 0.2 / 0.4 + 0.2) / 2.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx((0.0 + 0.2) / 2.0).epsilon(1e-12));
}

TEST_CASE("probabilities clip to [0,1] and reject bad parameters") {
    auto p = masking_probabilities({0.0, 1.0}, {0.0, 10.0}, 0.9, 1.0, 2);
    for (double v : p) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(p[1] == 1.0);

    CHECK_THROWS_AS(masking_probabilities({0.5}, {0.5}, 0.0, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(masking_probabilities({0.5}, {0.5}, 0.5, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(masking_probabilities({0.5}, {0.5}, 0.5, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(masking_probabilities({0.0}, {0.0}, 0.5, 1.0, 1), ConfigError);
}

TEST_CASE("selective mask draws subgraphs of drawn centers") {
    // line graph 0-1-2-3; node 3 unobserved
    Tensor a_sg = Tensor::from({4, 4}, {0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0});
    const std::vector<int> observed{0, 1, 2};
    auto all = draw_selective_mask({1.0, 0.0, 0.0}, observed, a_sg, 9);
    CHECK(all == std::vector<int>{0, 1});  // subgraph of 0 is {0,1}
    auto none = draw_selective_mask({0.0, 0.0, 0.0}, observed, a_sg, 9);
    CHECK(none.empty());
    auto edge = draw_selective_mask({0.0, 0.0, 1.0}, observed, a_sg, 9);
    CHECK(edge == std::vector<int>{1, 2});  // node 3 excluded: unobserved
    // determinism
    auto m1 = draw_selective_mask({0.5, 0.5, 0.5}, observed, a_sg, 123);
    auto m2 = draw_selective_mask({0.5, 0.5, 0.5}, observed, a_sg, 123);
    CHECK(m1 == m2);
}

TEST_CASE("random mask reaches the target fraction") {
    const int n = 20;
    Tensor a_sg({n, n}, 0.0);
    for (int i = 0; i + 1 < n; ++i) {
        a_sg(i, i + 1) = 1.0;
        a_sg(i + 1, i) = 1.0;
    }
    std::vector<int> observed;
    for (int i = 0; i < n; ++i) observed.push_back(i);
    const double delta_m = 0.5;
    auto m = draw_random_mask(observed, a_sg, delta_m, 77);
    CHECK(static_cast<double>(m.size()) >= n * delta_m);
    CHECK(std::is_sorted(m.begin(), m.end()));
    for (int i : m) CHECK(std::find(observed.begin(), observed.end(), i) != observed.end());
    CHECK(m == draw_random_mask(observed, a_sg, delta_m, 77));
    CHECK_THROWS_AS(draw_random_mask(observed, a_sg, 1.0, 1), ConfigError);
}

TEST_CASE("mean subgraph size oracle") {
    // line graph sizes: {0,1}=2, {0,1,2}=3, {1,2,3}=3
    Tensor a_sg = Tensor::from({4, 4}, {0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0});
    CHECK(mean_subgraph_size(a_sg, {0, 1, 2}) == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
}
