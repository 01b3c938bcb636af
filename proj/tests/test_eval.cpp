#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "abscam/cam.hpp"
#include "abscam/eval.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace abscam;
using namespace abscam::eval;

namespace {

const imaging::NormalizationStats kStats{};

double prob(const model::Classifier& net, const imaging::ImageTensor& img, int cls) {
    return model::forward(net, imaging::normalize(img, kStats)).probs[cls];
}

std::vector<double> probs_of(const EvalCurve& c) {
    std::vector<double> out;
    for (const auto& p : c.points) out.push_back(p.prob);
    return out;
}

} // namespace

TEST_CASE("trapezoid AUC by hand and against the uniform-rule oracle") {
    CHECK(trapezoid_auc({{0, 1}, {1, 1}}) == 1.0);
    CHECK(trapezoid_auc({{0, 0}, {0.5, 1}, {1, 0}}) == 0.5);
    CHECK(trapezoid_auc({{0, 0.3}}) == 0.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u;
    for (int steps : {1, 4, 7, 100}) {
        std::vector<CurvePoint> pts;
        std::vector<double> ys;
        for (int t = 0; t <= steps; ++t) {
            ys.push_back(u(rng));
            pts.push_back({static_cast<double>(t) / steps, ys.back()});
        }
        CHECK(trapezoid_auc(pts) == doctest::Approx(testing::uniform_trapezoid(ys)).epsilon(1e-12));
    }
}

TEST_CASE("curve step image replaces exactly ceil(t*N/steps) leading pixels") {
    const imaging::ImageTensor black(3, 3, 0.0), white(3, 3, 1.0);
    Grid map(3, 3);
    map.values = {9, 8, 7, 6, 5, 4, 3, 2, 1};
    const auto order = imaging::saliency_order(map);
    for (int t = 0; t <= 4; ++t) {
        const auto img = curve_step_image(black, white, order, t, 4);
        int lit = 0;
        for (int p = 0; p < 9; ++p) lit += img.at(p / 3, p % 3, 0) == 1.0;
        CHECK(lit == static_cast<int>(std::ceil(t * 9.0 / 4)));
        if (lit) CHECK(img.at(0, 0, 0) == 1.0);
    }
}

TEST_CASE("deletion and insertion match brute-force replay on a 4x4 fixture") {
    const auto net = model::build_reference_cnn(0);
    const auto img = testing::random_image(44, 4, 4);
    for (int trial = 0; trial < 6; ++trial) {
        auto map = testing::random_grid(900 + trial, 4, 4);
        if (trial % 2) map.values[3] = map.values[7] = map.values[11];  // ties
        for (int steps : {1, 3, 16, 20}) {
            for (int cls : {0, 3}) {
                const auto del = deletion_curve(net, kStats, img, map, cls, steps);
                CHECK(probs_of(del) ==
                      testing::brute_force_curve(net, kStats, img, imaging::ImageTensor(4, 4, 0.0), map, cls, steps));
                const auto blur = imaging::gaussian_blur(img, 1.0);
                const auto del_blur = deletion_curve(net, kStats, img, map, cls, steps, Baseline::Blur, 1.0);
                CHECK(probs_of(del_blur) == testing::brute_force_curve(net, kStats, img, blur, map, cls, steps));
                const auto ins = insertion_curve(net, kStats, img, map, cls, steps, 1.0);
                CHECK(probs_of(ins) == testing::brute_force_curve(net, kStats, blur, img, map, cls, steps));
                CHECK(ins.points.size() == static_cast<std::size_t>(steps + 1));
                CHECK(ins.points.back().fraction == 1.0);
                CHECK(ins.auc == doctest::Approx(testing::uniform_trapezoid(probs_of(ins))).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("curve endpoints") {
    const auto net = model::build_reference_cnn(0);
    const auto img = testing::fixture_image(2);
    const auto map = testing::random_grid(5, 32, 32);
    const double p0 = prob(net, img, 3);
    const auto del = deletion_curve(net, kStats, img, map, 3, 10);
    CHECK(del.points.front().prob == p0);
    CHECK(del.points.back().prob == prob(net, imaging::ImageTensor(32, 32, 0.0), 3));
    const auto ins = insertion_curve(net, kStats, img, map, 3, 10);
    CHECK(ins.points.front().prob == prob(net, imaging::gaussian_blur(img, 5.0), 3));
    CHECK(ins.points.back().prob == p0);
    CHECK_THROWS_AS(deletion_curve(net, kStats, img, map, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(deletion_curve(net, kStats, img, Grid(4, 4), 3, 10), std::invalid_argument);
}

TEST_CASE("drop/increase on a single case by hand") {
    const auto net = model::build_reference_cnn(0);
    const auto img = testing::fixture_image(1);
    auto map = testing::random_grid(8, 32, 32);
    const auto mask = imaging::topk_mask(map, 0.5);
    const double p_orig = prob(net, img, 3);
    const double p_mask = prob(net, imaging::multiply(img, mask.bits), 3);
    const auto c = drop_increase_case(net, kStats, img, map, 3, 0.5);
    CHECK(c.p_original == p_orig);
    CHECK(c.p_masked == p_mask);
    CHECK(c.drop == doctest::Approx(std::max(0.0, p_orig - p_mask) / p_orig));
    CHECK(c.increased == (p_mask > p_orig));
    CHECK_FALSE(c.excluded);

    const auto full = drop_increase_case(net, kStats, img, map, 3, 1.0);
    CHECK(full.p_masked == full.p_original);
    CHECK(full.drop == 0.0);
    CHECK_FALSE(full.increased);
}

TEST_CASE("average drop/increase aggregates in percent") {
    const auto net = model::build_reference_cnn(0);
    std::vector<imaging::ImageTensor> imgs;
    std::vector<Grid> maps;
    for (int k = 0; k < 4; ++k) {
        imgs.push_back(k < 3 ? testing::fixture_image(k + 1) : testing::random_image(1, 32, 32));
        maps.push_back(testing::random_grid(70 + k, 32, 32));
    }
    std::vector<DropIncreaseCase> cases;
    for (int k = 0; k < 4; ++k) cases.push_back({imgs[k], maps[k], k % 4});
    const auto r = average_drop_increase(net, kStats, cases);
    double drop = 0, inc = 0;
    for (const auto& c : r.cases) {
        drop += c.drop;
        inc += c.increased;
    }
    CHECK(r.n_images == 4);
    CHECK(r.average_drop == doctest::Approx(100 * drop / 4));
    CHECK(r.average_increase == doctest::Approx(100 * inc / 4));
    CHECK_THROWS_AS(average_drop_increase(net, kStats, {}), std::invalid_argument);
}

TEST_CASE("property: drop lies in [0,1] and increase excludes drop") {
    const auto net = model::build_reference_cnn(1);
    for (int t = 0; t < 15; ++t) {
        const auto img = testing::random_image(300 + t, 32, 32);
        const auto c = drop_increase_case(net, kStats, img, testing::random_grid(t, 32, 32), t % 5, 0.1 + 0.06 * t);
        CHECK(c.drop >= 0.0);
        CHECK(c.drop <= 1.0);
        if (c.increased) CHECK(c.drop == 0.0);
    }
}

TEST_CASE("baseline parsing") {
    CHECK(parse_baseline("zeros") == Baseline::Zeros);
    CHECK(parse_baseline("blur") == Baseline::Blur);
    CHECK_FALSE(parse_baseline("noise"));
    CHECK(to_string(Baseline::Blur) == "blur");
}

TEST_CASE("annotation parsing") {
    const auto boxes = parse_annotations("image_id, class_label, x0, y0, x1, y1\n\ncat,3,0,1,10,12\n dog , 0 ,2,2,4,4\n");
    REQUIRE(boxes.size() == 2);
    CHECK(boxes[0].image_id == "cat");
    CHECK(boxes[0].class_label == 3);
    CHECK(boxes[0].y1 == 12);
    CHECK(boxes[1].image_id == "dog");

    auto line_of = [](const std::string& text) {
        try {
            parse_annotations(text);
        } catch (const AnnotationParseError& e) {
            CHECK(std::string(e.what()).find("line " + std::to_string(e.line())) != std::string::npos);
            return e.line();
        }
        return -1;
    };
    CHECK(line_of("a,b\n") == 1);
    CHECK(line_of("") == 1);
    const std::string head = std::string(kAnnotationHeader) + "\n";
    CHECK(line_of(head + "a,1,0,0,2,2\n" + "a,1,0,0,2\n") == 3);
    CHECK(line_of(head + "a,1,0,0,2,2\na,1,0,0,2,2\na,1,0,0,2,2\na,1,0,0,2,2\na,1,0,0,2,2\na,x,0,0,2,2\n") == 7);
    CHECK(line_of(head + "a,1,3,0,2,2\n") == 2);
    CHECK(line_of(head + "a,-1,0,0,2,2\n") == 2);
    CHECK(line_of(head + ",1,0,0,2,2\n") == 2);
    CHECK(line_of(head + "a,1,0,0,2,2,\n") == 2);
    CHECK(parse_annotations(head).empty());
}

TEST_CASE("argmax ties resolve to the first scan position") {
    Grid g(2, 3);
    g.values = {0, 5, 1, 5, 0, 5};
    CHECK(argmax_pixel(g).row == 0);
    CHECK(argmax_pixel(g).col == 1);
    CHECK_THROWS_AS(argmax_pixel(Grid()), std::invalid_argument);
}

TEST_CASE("pointing hits scale the argmax centre into source coordinates") {
    Grid g(4, 4);
    g.at(1, 2) = 1.0;  // centre (2.5, 1.5) → source 100×200: x = 125, y = 37.5
    PointingRecord rec{g, {{"a", 0, 120, 30, 130, 40}}, 100, 200};
    CHECK(pointing_hit(rec));
    rec.boxes = {{"a", 0, 126, 30, 130, 40}};
    CHECK_FALSE(pointing_hit(rec));
    rec.boxes = {{"a", 0, 0, 0, 10, 10}, {"a", 0, 125, 37, 126, 38}};
    CHECK(pointing_hit(rec));
    rec.boxes = {{"a", 0, 0, 0, 250, 10}};
    CHECK_THROWS_AS(pointing_hit(rec), std::invalid_argument);
    rec.boxes.clear();
    CHECK_THROWS_AS(pointing_hit(rec), std::invalid_argument);
}

TEST_CASE("pointing game: whole-image boxes and a half-hit fixture") {
    std::vector<PointingRecord> whole, half;
    for (int k = 0; k < 10; ++k) {
        const auto map = testing::random_grid(k, 8, 8);
        whole.push_back({map, {{"i", 0, 0, 0, 16, 16}}, 16, 16});
        const auto at = argmax_pixel(map);
        const int x = at.col * 2, y = at.row * 2;
        const BBox on{"i", 0, x, y, x + 2, y + 2};
        const BBox off = at.row < 4 ? BBox{"i", 0, 0, 8, 16, 16} : BBox{"i", 0, 0, 0, 16, 8};
        half.push_back({map, {k % 2 ? on : off}, 16, 16});
    }
    CHECK(pointing_game(whole).accuracy == 1.0);
    const auto r = pointing_game(half);
    CHECK(r.hits == 5);
    CHECK(r.misses == 5);
    CHECK(r.accuracy == 0.5);
    CHECK_THROWS_AS(pointing_game({}), std::invalid_argument);
}

TEST_CASE("spearman by hand") {
    Grid a(1, 4), b(1, 4);
    a.values = {1, 2, 3, 4};
    b.values = {10, 20, 30, 40};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    b.values = {4, 3, 2, 1};
    CHECK(spearman(a, b) == doctest::Approx(-1.0));
    b.values = {1, 3, 2, 4};
    CHECK(spearman(a, b) == doctest::Approx(0.8));
    b.values = {1, 1, 2, 2};  // ranks 1.5,1.5,3.5,3.5
    CHECK(spearman(a, b) == doctest::Approx(4.0 / std::sqrt(5.0 * 4.0)));
    CHECK(spearman(a, Grid(1, 4, 0.7)) == 0.0);
    CHECK_THROWS_AS(spearman(a, Grid(2, 4)), std::invalid_argument);
}

TEST_CASE("property: spearman is symmetric, bounded and monotone-invariant") {
    for (int t = 0; t < 30; ++t) {
        auto a = testing::random_grid(t, 5, 6), b = testing::random_grid(100 + t, 5, 6);
        if (t % 4 == 0)
            for (double& v : a.values) v = std::round(v * 3);
        const double s = spearman(a, b);
        CHECK(s == doctest::Approx(spearman(b, a)).epsilon(1e-14));
        CHECK(std::abs(s) <= 1.0 + 1e-12);
        auto c = b;
        for (double& v : c.values) v = std::log(v + 0.1) * 7;
        CHECK(spearman(a, c) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("sanity check rows and the randomization identities") {
    const auto net = model::build_reference_cnn(0);
    const auto img = testing::fixture_image(1);
    const auto input = imaging::normalize(img);
    const auto layer = net.layer("conv3");
    const auto cascade =
        sanity_check(net, img, input, layer, 3, "grad-cam", model::RandomizationMode::Cascade, {1, 2});
    const auto independent =
        sanity_check(net, img, input, layer, 3, "grad-cam", model::RandomizationMode::Independent, {1, 2});
    REQUIRE(cascade.size() == 5);
    CHECK(cascade.front().layer == "fc2");
    CHECK(cascade.back().layer == "conv1");
    CHECK(cascade.front().per_seed == independent.front().per_seed);
    CHECK(cascade[2].mean_similarity == doctest::Approx((cascade[2].per_seed[0] + cascade[2].per_seed[1]) / 2));
    for (const auto& r : cascade) CHECK(std::abs(r.mean_similarity) <= 1.0);

    const auto map = cam::run_method("grad-cam", {net, img, input, layer, 3, {}});
    const auto redo = cam::run_method("grad-cam", {model::randomize_layers(net, model::RandomizationMode::Cascade, net.layer("conv3"), 2), img, input, layer, 3, {}});
    CHECK(cascade[2].per_seed[1] == spearman(map.values, redo.values));

    CHECK_THROWS_AS(sanity_check(net, img, input, layer, 3, "grad-cam", model::RandomizationMode::Cascade, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(sanity_check(net, img, input, layer, 3, "nope", model::RandomizationMode::Cascade, {1}),
                    std::invalid_argument);
}

TEST_CASE("non-increasing fraction") {
    std::vector<SanityRow> rows{{"a", 0.9, {}}, {"b", 0.5, {}}, {"c", 0.6, {}}, {"d", 0.6, {}}, {"e", 0.1, {}}};
    CHECK(non_increasing_fraction(rows) == 0.75);
    CHECK(non_increasing_fraction({rows[0]}) == 1.0);
}
