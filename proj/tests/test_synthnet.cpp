#include <doctest.h>

#include <cstdio>
#include <cstring>

#include "dcp/checkpoint.hpp"
#include "dcp/synthnet.hpp"

using namespace dcp;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig c;
    c.z_dim = 6;
    c.w_dim = 6;
    c.mapping_layers = 2;
    c.resolutions = {4, 8};
    c.channels = {5, 3};
    return c;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(),
                       a.data().size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("config validation") {
    GeneratorConfig c = small_config();
    CHECK_NOTHROW(c.validate());
    c.resolutions = {8, 16};
    CHECK_THROWS_AS(c.validate(), ModelError);
    c = small_config();
    c.resolutions = {4, 16};
    CHECK_THROWS_AS(c.validate(), ModelError);
    c = small_config();
    c.channels = {5};
    CHECK_THROWS_AS(c.validate(), ModelError);
    c = small_config();
    c.truncation_psi = 0.0;
    CHECK_THROWS_AS(c.validate(), ModelError);
    CHECK(GeneratorConfig::from_json(small_config().to_json()).to_json() ==
          small_config().to_json());
}

TEST_CASE("initialization is deterministic and uses the documented biases") {
    GeneratorConfig c = small_config();
    GeneratorWeights a = init_generator(c, 9);
    GeneratorWeights b = init_generator(c, 9);
    GeneratorWeights other = init_generator(c, 10);
    REQUIRE(a.tensors.size() == b.tensors.size());
    bool all_same = true;
    for (const auto& [name, t] : a.tensors) all_same = all_same && bits_equal(t, b.at(name));
    CHECK(all_same);
    CHECK_FALSE(bits_equal(a.at("const"), other.at("const")));

    for (double v : a.at("block.4.conv.bias").data()) CHECK(v == 0.0);
    for (double v : a.at("block.4.affine.bias").data()) CHECK(v == 1.0);
    for (double v : a.at("block.8.torgb_affine.bias").data()) CHECK(v == 1.0);
    for (double v : a.at("mapping.0.bias").data()) CHECK(v == 0.0);
}

TEST_CASE("mapping is an MLP with leaky relu between layers") {
    GeneratorConfig c = small_config();
    c.mapping_layers = 1;
    GeneratorWeights g = init_generator(c, 1);
    std::mt19937_64 rng(2);
    Tensor z = Tensor::randn({c.z_dim}, rng);
    LatentVector w = map_latent(g, {z, LatentSpace::Z});
    REQUIRE(w.space == LatentSpace::W);
    const Tensor& W = g.at("mapping.0.weight");
    for (int64_t i = 0; i < c.w_dim; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < c.z_dim; ++j) s += W.at(i * c.z_dim + j) * z.at(j);
        CHECK(w.values.at(i) == doctest::Approx(s).epsilon(1e-12));  // single layer: no lrelu
    }
    CHECK_THROWS_AS(map_latent(g, {z, LatentSpace::W}), ModelError);
    CHECK_THROWS_AS(map_latent(g, {Tensor::zeros({c.z_dim + 1}), LatentSpace::Z}), ModelError);
}

TEST_CASE("zeroed convolutions produce an image of summed toRGB biases") {
    GeneratorConfig c = small_config();
    GeneratorWeights g = init_generator(c, 3);
    for (const std::string r : {"4", "8"}) {
        for (double& v : g.at("block." + r + ".conv.weight").mutable_data()) v = 0.0;
        for (double& v : g.at("block." + r + ".torgb.weight").mutable_data()) v = 0.0;
    }
    auto b4 = g.at("block.4.torgb.bias").mutable_data();
    auto b8 = g.at("block.8.torgb.bias").mutable_data();
    double bias4[3] = {0.1, -0.2, 0.3}, bias8[3] = {0.01, 0.02, 0.03};
    for (int i = 0; i < 3; ++i) {
        b4[i] = bias4[i];
        b8[i] = bias8[i];
    }
    std::mt19937_64 rng(4);
    Tensor z = Tensor::randn({c.z_dim}, rng);
    Tensor img = synthesize(g, map_latent(g, {z, LatentSpace::Z})).image;
    REQUIRE(img.shape() == Shape{3, 8, 8});
    for (int64_t ch = 0; ch < 3; ++ch)
        for (int64_t p = 0; p < 64; ++p)
            CHECK(img.at(ch * 64 + p) == doctest::Approx(bias4[ch] + bias8[ch]).epsilon(1e-12));
}

TEST_CASE("truncation interpolates toward the mean") {
    Tensor w_mean = Tensor::from({3}, {1.0, 2.0, 3.0});
    LatentVector w{Tensor::from({3}, {3.0, 2.0, 7.0}), LatentSpace::W};
    LatentVector full = truncate(w, w_mean, 1.0);
    LatentVector none = truncate(w, w_mean, 0.0);
    LatentVector half = truncate(w, w_mean, 0.5);
    for (int64_t i = 0; i < 3; ++i) {
        CHECK(full.values.at(i) == w.values.at(i));
        CHECK(none.values.at(i) == w_mean.at(i));
        CHECK(half.values.at(i) ==
              doctest::Approx(0.5 * (w.values.at(i) + w_mean.at(i))).epsilon(1e-12));
    }
    CHECK_THROWS_AS(truncate(w, w_mean, 1.5), ModelError);
}

TEST_CASE("count_params matches the actual tensor sizes") {
    for (uint64_t seed : {0ULL, 1ULL}) {
        GeneratorConfig c = small_config();
        GeneratorWeights g = init_generator(c, seed);
        int64_t total = 0;
        for (const auto& [name, t] : g.tensors) total += t.numel();
        CHECK(count_params(c) == total);
    }
    GeneratorConfig wide = small_config();
    wide.channels = {8, 6};
    CHECK(count_flops(wide) > count_flops(small_config()));
}

TEST_CASE("checkpoint round trip preserves weights and config") {
    std::string path = "/tmp/synthnet_roundtrip.dcpg";
    GeneratorConfig c = small_config();
    GeneratorWeights g = init_generator(c, 5);
    save_checkpoint(g, path);
    GeneratorWeights l = load_checkpoint(path);
    CHECK(l.config.to_json() == c.to_json());
    bool all_same = true;
    for (const auto& [name, t] : g.tensors) all_same = all_same && bits_equal(t, l.at(name));
    CHECK(all_same);

    // identical latents give identical images after the round trip
    std::mt19937_64 rng(6);
    Tensor z = Tensor::randn({c.z_dim}, rng);
    LatentVector w = map_latent(g, {z, LatentSpace::Z});
    CHECK(bits_equal(synthesize(g, w).image, synthesize(l, w).image));
    std::remove(path.c_str());
}

TEST_CASE("synthesis is affine in w when only the toRGB style reads it") {
    // freeze the feature path: zero conv weights, bias 1 so lrelu stays in its
    // linear region; the image then depends on w only through the toRGB style
    GeneratorConfig c = small_config();
    c.resolutions = {4};
    c.channels = {4};
    c.demodulate = false;
    GeneratorWeights g = init_generator(c, 7);
    for (double& v : g.at("block.4.conv.weight").mutable_data()) v = 0.0;
    for (double& v : g.at("block.4.conv.bias").mutable_data()) v = 1.0;

    auto image = [&](const Tensor& wv) {
        return synthesize(g, {wv, LatentSpace::W}).image;
    };
    std::mt19937_64 rng(8);
    Tensor w0 = Tensor::randn({c.w_dim}, rng);
    Tensor d1 = Tensor::randn({c.w_dim}, rng);
    Tensor d2 = Tensor::randn({c.w_dim}, rng);
    Tensor base = image(w0);
    Tensor i1 = image(add(w0, d1));
    Tensor i2 = image(add(w0, d2));
    Tensor both = image(add(w0, add(d1, d2)));
    for (int64_t p = 0; p < base.numel(); ++p) {
        double lhs = both.at(p) - base.at(p);
        double rhs = (i1.at(p) - base.at(p)) + (i2.at(p) - base.at(p));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("loading a checkpoint with mismatched shapes fails") {
    std::string path = "/tmp/synthnet_mismatch.dcpg";
    GeneratorConfig c = small_config();
    GeneratorWeights g = init_generator(c, 5);
    g.tensors.erase("const");
    g.tensors.emplace("const", Tensor::zeros({c.channels[0], 2, 2}));
    save_checkpoint(g, path);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    std::remove(path.c_str());
}
