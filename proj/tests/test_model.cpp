#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "abscam/model.hpp"
#include "support/fixtures.hpp"

using namespace abscam;
using namespace abscam::model;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "abscam-test-model";
    fs::create_directories(dir);
    return dir / name;
}

double block_std(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / v.size());
}

// Pre-softmax logit of `cls` after injecting `acts` at `layer`.
double logit_at(const Classifier& m, const LayerRef& layer, const Tensor3& acts, int cls) {
    return forward_from(m, layer, acts)[cls];
}

} // namespace

TEST_CASE("reference CNN structure") {
    const auto m = build_reference_cnn(0);
    CHECK(m.layer_names() == std::vector<std::string>{"conv1", "pool1", "conv2", "pool2", "conv3", "gap", "fc1", "fc2"});
    CHECK(m.num_classes() == kReferenceClasses);
    CHECK(m.default_target_layer().name == "conv3");
    CHECK(m.layer("conv2").index == 2);
    try {
        m.layer("conv9");
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(std::string(e.what()).find("conv3") != std::string::npos);
    }
    const auto tops = parameterized_layers_top_down(m);
    REQUIRE(tops.size() == 5);
    CHECK(tops.front().name == "fc2");
    CHECK(tops.back().name == "conv1");
}

TEST_CASE("golden logits of the seeded reference network") {
    const auto m = build_reference_cnn(0);
    CHECK(parameter_checksum(m) == 10464641735675554534ull);
    const std::vector<std::vector<double>> golden = {
        {0.053239879443552074, -0.74245247554020943, -2.4901012836824288, 1.358345664476678, 0.16103358628186851},
        {0.10562404604249687, -0.64588246888969547, -1.8139041028459602, 0.76590460180049968, 0.16103358628186851},
        {-0.18820192947081438, -1.5692781321908083, -3.4747158430253591, 1.7854381280844809, 0.16103358628186851}};
    for (int f = 1; f <= 3; ++f) {
        const auto s = forward(m, imaging::normalize(testing::fixture_image(f)));
        for (int c = 0; c < 5; ++c) CHECK(s.logits[c] == doctest::Approx(golden[f - 1][c]).epsilon(1e-12));
    }
}

TEST_CASE("zero input yields the output bias as logits") {
    const auto m = build_reference_cnn(3);
    const auto s = forward(m, Tensor3(3, 32, 32, 0.0));
    const auto& bias = m.layers().back().params->bias;
    for (int c = 0; c < 5; ++c) CHECK(s.logits[c] == doctest::Approx(bias[c]).epsilon(1e-14));
}

TEST_CASE("softmax sums to one and is shift invariant") {
    const std::vector<double> z = {1000.0, 1001.0, 999.0};
    const auto p = softmax(z);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
    const auto q = softmax({0.0, 1.0, -1.0});
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-14));
    const auto s = forward(build_reference_cnn(0), imaging::normalize(testing::fixture_image(2)));
    CHECK(score(s, 3).prob == doctest::Approx(softmax(s.logits)[3]));
    CHECK(s.argmax() == 3);
}

TEST_CASE("forward_from at a layer reproduces the full forward pass") {
    const auto m = build_reference_cnn(1);
    const auto in = imaging::normalize(testing::fixture_image(1));
    const auto full = forward(m, in);
    for (const char* name : {"conv1", "pool2", "conv3", "fc1"}) {
        const auto layer = m.layer(name);
        const auto acts = feature_maps(m, in, layer).activations;
        const auto tail = forward_from(m, layer, acts);
        for (int c = 0; c < 5; ++c) CHECK(tail[c] == doctest::Approx(full.logits[c]).epsilon(1e-13));
    }
}

TEST_CASE("gradient at conv3 equals the analytic GAP-head weight product") {
    const auto m = build_reference_cnn(0);
    const auto& w1 = m.layers()[m.layer("fc1").index].params->weight;  // 16×16, row = output
    const auto& w2 = m.layers()[m.layer("fc2").index].params->weight;  // 5×16
    const auto in = imaging::normalize(testing::fixture_image(3));
    const auto layer = m.layer("conv3");
    for (int cls = 0; cls < 5; ++cls) {
        const auto g = class_gradient(m, in, layer, cls).grads;
        const double plane = static_cast<double>(g.plane());
        for (int k = 0; k < 16; ++k) {
            double expected = 0;
            for (int j = 0; j < 16; ++j) expected += w2[cls * 16 + j] * w1[j * 16 + k];
            expected /= plane;
            for (int i = 0; i < g.height; ++i)
                for (int jj = 0; jj < g.width; ++jj) CHECK(g.at(k, i, jj) == doctest::Approx(expected).epsilon(1e-12).scale(1e-15));
        }
    }
}

TEST_CASE("masked class has a vanishing gradient") {
    const auto m = build_reference_cnn(0);
    const auto in = imaging::normalize(testing::fixture_image(1));
    for (const char* name : {"conv1", "conv2", "conv3"}) {
        const auto g = class_gradient(m, in, m.layer(name), kReferenceMaskedClass).grads;
        for (double v : g.values) CHECK(v == 0.0);
    }
}

TEST_CASE("class gradient matches central finite differences on every conv layer") {
    const auto m = build_reference_cnn(0);
    const auto in = imaging::normalize(testing::fixture_image(1));
    std::mt19937_64 rng(11);
    const double h = 1e-6;
    for (const char* name : {"conv1", "conv2", "conv3"}) {
        const auto layer = m.layer(name);
        const auto acts = feature_maps(m, in, layer).activations;
        for (int cls = 0; cls < 5; ++cls) {
            const auto g = class_gradient(m, in, layer, cls).grads;
            const double f0 = logit_at(m, layer, acts, cls);
            int checked = 0, kinks = 0;
            while (checked < 20) {
                const std::size_t idx = rng() % acts.size();
                auto plus = acts, minus = acts;
                plus.values[idx] += h;
                minus.values[idx] -= h;
                const double fp = logit_at(m, layer, plus, cls), fm = logit_at(m, layer, minus, cls);
                // max-pool ties and ReLU hinges: one-sided slopes disagree, no derivative exists
                if (std::abs((fp - f0) / h - (f0 - fm) / h) > 1e-4) {
                    REQUIRE(++kinks < 200);
                    continue;
                }
                const double fd = (fp - fm) / (2 * h);
                CHECK(std::abs(g.values[idx] - fd) <= std::max(1e-3, 1e-2 * std::abs(fd)));
                ++checked;
            }
        }
    }
}

TEST_CASE("probe agrees with separate feature and gradient calls") {
    const auto m = build_reference_cnn(2);
    const auto in = imaging::normalize(testing::fixture_image(2));
    const auto layer = m.layer("conv2");
    const auto p = probe(m, in.tensor, layer, 1);
    CHECK(p.features.activations == feature_maps(m, in, layer).activations);
    CHECK(p.gradient.grads == class_gradient(m, in, layer, 1).grads);
    CHECK(p.scores.logits == forward(m, in).logits);
}

TEST_CASE("forward rejects mismatched input") {
    const auto m = build_reference_cnn(0);
    CHECK_THROWS_AS(forward(m, Tensor3(4, 32, 32)), AdapterError);
    CHECK_THROWS_AS(forward(m, Tensor3(3, 2, 2)), AdapterError);
    CHECK_NOTHROW(forward(m, Tensor3(3, 20, 12)));
}

TEST_CASE("normal stream is reproducible and roughly standard") {
    NormalStream a(5, 1), b(5, 1), c(5, 2);
    double sum = 0, sq = 0;
    bool differs = false;
    for (int i = 0; i < 20000; ++i) {
        const double x = a.next();
        CHECK(x == b.next());
        differs = differs || x != c.next();
        sum += x;
        sq += x * x;
    }
    CHECK(differs);
    CHECK(sum / 20000 == doctest::Approx(0.0).epsilon(0.03).scale(1));
    CHECK(sq / 20000 == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("randomization modes") {
    const auto m = build_reference_cnn(0);
    const auto before = parameter_checksum(m);
    const auto fc2 = m.layer("fc2");
    const auto conv2 = m.layer("conv2");

    SUBCASE("cascade and independent coincide at the top layer") {
        const auto c = randomize_layers(m, RandomizationMode::Cascade, fc2, 9);
        const auto i = randomize_layers(m, RandomizationMode::Independent, fc2, 9);
        CHECK(parameter_checksum(c) == parameter_checksum(i));
        CHECK(parameter_checksum(c) != before);
    }
    SUBCASE("cascade re-draws everything from the top down to the target") {
        const auto c = randomize_layers(m, RandomizationMode::Cascade, conv2, 9);
        for (const auto& ref : parameterized_layers_top_down(m)) {
            const bool redrawn = ref.index >= conv2.index;
            CHECK((c.layers()[ref.index].params->weight != m.layers()[ref.index].params->weight) == redrawn);
        }
    }
    SUBCASE("independent re-draws only the target, sharing its stream with cascade") {
        const auto i = randomize_layers(m, RandomizationMode::Independent, conv2, 9);
        const auto c = randomize_layers(m, RandomizationMode::Cascade, conv2, 9);
        for (const auto& ref : parameterized_layers_top_down(m))
            CHECK((i.layers()[ref.index].params->weight != m.layers()[ref.index].params->weight) == (ref.index == conv2.index));
        CHECK(i.layers()[conv2.index].params->weight == c.layers()[conv2.index].params->weight);
    }
    SUBCASE("re-drawn blocks match the original scale") {
        const auto c = randomize_layers(m, RandomizationMode::Cascade, m.layer("conv1"), 3);
        for (const auto& ref : parameterized_layers_top_down(m)) {
            const auto& w0 = m.layers()[ref.index].params->weight;
            const auto& w1 = c.layers()[ref.index].params->weight;
            CHECK(block_std(w1) == doctest::Approx(block_std(w0)).epsilon(0.35));
        }
    }
    SUBCASE("seeded and non-destructive") {
        const auto a = randomize_layers(m, RandomizationMode::Cascade, conv2, 4);
        const auto b = randomize_layers(m, RandomizationMode::Cascade, conv2, 4);
        const auto d = randomize_layers(m, RandomizationMode::Cascade, conv2, 5);
        CHECK(parameter_checksum(a) == parameter_checksum(b));
        CHECK(parameter_checksum(a) != parameter_checksum(d));
        CHECK(parameter_checksum(m) == before);
    }
    SUBCASE("independent on a parameter-free layer is a warned no-op") {
        Warnings w;
        const auto r = randomize_layers(m, RandomizationMode::Independent, m.layer("pool1"), 1, &w);
        CHECK(parameter_checksum(r) == before);
        CHECK(w.size() == 1);
    }
}

TEST_CASE("randomization mode parsing") {
    CHECK(parse_randomization_mode("cascade") == RandomizationMode::Cascade);
    CHECK(parse_randomization_mode("CR") == RandomizationMode::Cascade);
    CHECK(parse_randomization_mode("independent") == RandomizationMode::Independent);
    CHECK(parse_randomization_mode("IR") == RandomizationMode::Independent);
    CHECK_FALSE(parse_randomization_mode("sideways"));
    CHECK(to_string(RandomizationMode::Independent) == "independent");
}

TEST_CASE("weights file round trip preserves outputs bit for bit") {
    const auto m = build_reference_cnn(6);
    const auto path = scratch("ref6.bin");
    save_weights(m, path);
    const auto back = load_weights(path);
    CHECK(parameter_checksum(back) == parameter_checksum(m));
    CHECK(back.layer_names() == m.layer_names());
    const auto in = imaging::normalize(testing::fixture_image(3));
    CHECK(forward(back, in).logits == forward(m, in).logits);

    std::ifstream f(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f)), {});
    const auto cut = scratch("cut.bin");
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(load_weights(cut), IngestionError);
    const auto bad = scratch("bad.bin");
    std::ofstream(bad, std::ios::binary) << "ABSCAMW2" << bytes.substr(8);
    CHECK_THROWS_AS(load_weights(bad), IngestionError);
}

TEST_CASE("model profiles") {
    const auto p = parse_profile("# comment\nmodel_id = tiny\nweights = nets/tiny.bin\ntarget_layer = conv2\n"
                                 "mean = 0.5, 0.5, 0.5\nstd = 0.25,0.25,0.25\ninput_size = 48x64\n",
                                 "/data/profiles");
    CHECK(p.model_id == "tiny");
    CHECK(fs::path(p.weights) == fs::path("/data/profiles/nets/tiny.bin"));
    CHECK(p.target_layer == "conv2");
    CHECK(p.stats.mean[1] == 0.5);
    CHECK(p.stats.std[2] == 0.25);
    CHECK(p.input_height == 48);
    CHECK(p.input_width == 64);

    const auto q = parse_profile("model_id = ref7\nweights = builtin:reference\nseed = 7\ninput_size = 40\n");
    CHECK(q.reference_seed == 7);
    CHECK(q.input_height == 40);
    CHECK(parameter_checksum(instantiate(q)) == parameter_checksum(build_reference_cnn(7)));

    try {
        parse_profile("model_id = x\n\ncolour = red\n");
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS(parse_profile("input_size = big\n"));

    const auto weights = scratch("prof.bin");
    save_weights(build_reference_cnn(2), weights);
    const auto prof = scratch("prof.txt");
    std::ofstream(prof) << "model_id = saved\nweights = prof.bin\ninput_size = 32\ntarget_layer = conv2\n";
    const auto loaded = load_profile(prof);
    CHECK(parameter_checksum(instantiate(loaded)) == parameter_checksum(build_reference_cnn(2)));
    CHECK(reference_profile().target_layer == "conv3");
    CHECK(reference_profile().input_height == 32);
}
