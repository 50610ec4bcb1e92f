#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "imdp/noise_views.hpp"
#include "oracles.hpp"

using namespace imdp;
using namespace imdp::noise;

namespace {
Rng rng_for(const char* name) { return RngFactory(123).stream(name); }
}  // namespace

TEST_CASE("SRM kernel file loads three zero-sum kernels") {
    const SrmKernels& k = SrmKernels::standard();
    CHECK(k.count() == 3);
    for (int i = 0; i < k.count(); ++i) {
        CHECK(k.kernel(i).dim(0) == 5);
        CHECK(std::abs(k.kernel(i).sum()) < 1e-12);
    }
    // Spot-check the KB kernel center (-12/12) and a corner (-1/12).
    CHECK(k.kernel(1).at(2, 2) == doctest::Approx(-1.0));
    CHECK(k.kernel(1).at(0, 0) == doctest::Approx(-1.0 / 12.0));
}

TEST_CASE("srm_extract kills constant images") {
    Rng rng = rng_for("srm_const");
    for (int trial = 0; trial < 10; ++trial) {
        double v = rng.uniform(0.0, 255.0);
        Tensor img({7, 9, 3}, v);
        Tensor out = srm_extract(img);
        CHECK(out.dim(0) == 3);
        CHECK(out.dim(1) == 7);
        CHECK(out.dim(2) == 9);
        CHECK(std::abs(out.max()) < 1e-9);
        CHECK(std::abs(out.min()) < 1e-9);
    }
}

TEST_CASE("srm_extract is linear under scaling") {
    Rng rng = rng_for("srm_linear");
    Tensor img = oracles::random_tensor({6, 6, 3}, rng, 0.0, 255.0);
    Tensor img2 = img;
    img2 *= 2.0;
    Tensor a = srm_extract(img);
    Tensor b = srm_extract(img2);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(b[i] == doctest::Approx(2.0 * a[i]).epsilon(1e-12));
}

TEST_CASE("srm impulse response is the flipped kernel, coefficient by coefficient") {
    Tensor img({9, 9, 3});
    img.at(4, 4, 0) = 1.0;  // unit impulse; the channel sum has a single 1
    Tensor out = srm_extract(img);
    const SrmKernels& k = SrmKernels::standard();
    for (int f = 0; f < 3; ++f) {
        Tensor flipped = oracles::flip180(k.kernel(f));
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx)
                CHECK(out.at(f, 4 + dy, 4 + dx) ==
                      doctest::Approx(flipped.at(2 + dy, 2 + dx)).epsilon(1e-12));
        // Far away from the impulse, the response is zero.
        CHECK(out.at(f, 0, 0) == doctest::Approx(0.0));
    }
}

TEST_CASE("bayar_project: all-ones kernel becomes center -1, others 1/24") {
    Rng rng = rng_for("bayar_ones");
    BayarKernelSet set(1, 5, rng);
    set.weights().mutable_value().fill(1.0);
    bayar_project(set);
    const Tensor& w = set.weights().value();
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double expect = (i == 2 && j == 2) ? -1.0 : 1.0 / 24.0;
            CHECK(w[(static_cast<std::size_t>(i)) * 5 + j] ==
                  doctest::Approx(expect).epsilon(1e-12));
        }
    CHECK(set.projected());
}

TEST_CASE("bayar_project is a fixed point on valid kernels") {
    Rng rng = rng_for("bayar_fix");
    BayarKernelSet set(3, 5, rng);
    bayar_project(set);
    Tensor before = set.weights().value();
    bayar_project(set);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(set.weights().value()[i] == before[i]);
}

TEST_CASE("bayar_project rejects zero off-center sum") {
    Rng rng = rng_for("bayar_zero");
    BayarKernelSet set(1, 5, rng);
    set.weights().mutable_value().fill(0.0);
    set.weights().mutable_value()[12] = 5.0;  // only the center is nonzero
    CHECK_THROWS_AS(bayar_project(set), DegenerateKernel);
    // The reinit path recovers instead.
    bayar_project_or_reinit(set, rng);
    CHECK(set.projected());
}

TEST_CASE("bayar_extract: constant image maps to zero, deterministic") {
    Rng rng = rng_for("bayar_const");
    BayarKernelSet set(3, 5, rng);
    bayar_project(set);
    Tensor img({8, 10, 3}, 128.0);
    Tensor out = bayar_extract(img, set);
    CHECK(out.dim(0) == 3);
    CHECK(out.dim(1) == 8);
    CHECK(out.dim(2) == 10);
    CHECK(std::abs(out.max()) < 1e-9);

    Tensor img2 = oracles::random_tensor({8, 10, 3}, rng, 0.0, 255.0);
    Tensor a = bayar_extract(img2, set);
    Tensor b = bayar_extract(img2, set);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("bayar_extract rejects unprojected kernels") {
    Rng rng = rng_for("bayar_unproj");
    BayarKernelSet set(2, 5, rng);  // raw random init, not projected
    Tensor img({8, 8, 3}, 10.0);
    CHECK_THROWS_AS(bayar_extract(img, set), UnprojectedKernel);
}

TEST_CASE("bayar impulse response is the flipped projected kernel") {
    Rng rng = rng_for("bayar_imp");
    BayarKernelSet set(2, 5, rng);
    bayar_project(set);
    // Grayscale weights sum to 1, so an impulse of (1,1,1) puts a unit
    // impulse into the grayscale plane.
    Tensor img({9, 9, 3});
    for (int c = 0; c < 3; ++c) img.at(4, 4, c) = 1.0;
    Tensor out = bayar_extract(img, set);
    for (int k = 0; k < 2; ++k) {
        Tensor kern({5, 5});
        for (int i = 0; i < 25; ++i)
            kern[static_cast<std::size_t>(i)] =
                set.weights().value()[static_cast<std::size_t>(k) * 25 + i];
        Tensor flipped = oracles::flip180(kern);
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx)
                CHECK(out.at(k, 4 + dy, 4 + dx) ==
                      doctest::Approx(flipped.at(2 + dy, 2 + dx)).epsilon(1e-9));
    }
}

TEST_CASE("noiseprint surrogate: shape contract and zero final layer") {
    Rng rng = rng_for("np");
    NoiseprintSurrogate np(8, rng);
    Tensor img = oracles::random_tensor({16, 16, 3}, rng, 0.0, 255.0);
    Tensor out = np.extract(img);
    CHECK(out.dim(0) == 1);
    CHECK(out.dim(1) == 16);
    CHECK(out.dim(2) == 16);

    nn::ParamList params;
    np.collect("np", params);
    for (auto& [name, var] : params)
        if (name.find(".out.") != std::string::npos)
            const_cast<ad::Var&>(var).mutable_value().fill(0.0);
    Tensor zeroed = np.extract(img);
    CHECK(std::abs(zeroed.max()) == 0.0);
    CHECK(std::abs(zeroed.min()) == 0.0);
}

TEST_CASE("noiseprint surrogate gradient matches finite differences") {
    Rng rng = rng_for("np_grad");
    NoiseprintSurrogate np(4, rng);
    Tensor img = oracles::random_tensor({3, 6, 6}, rng, -1.0, 1.0);
    nn::ParamList params;
    np.collect("np", params);
    auto forward = [&] { return ad::mean_all(ad::gelu(np.forward(ad::Var::constant(img)))); };
    for (auto& [name, var] : params) {
        double err = oracles::gradient_check(forward, var);
        INFO(name);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("extractors preserve spatial dims on odd sizes") {
    Rng rng = rng_for("odd");
    BayarKernelSet set(3, 5, rng);
    bayar_project(set);
    NoiseprintSurrogate np(8, rng);
    Tensor img = oracles::random_tensor({11, 13, 3}, rng, 0.0, 255.0);
    CHECK(srm_extract(img).dim(1) == 11);
    CHECK(srm_extract(img).dim(2) == 13);
    CHECK(bayar_extract(img, set).dim(1) == 11);
    CHECK(np.extract(img).dim(2) == 13);
}

TEST_CASE("grayscale uses ITU-R 601 weights") {
    Tensor img({1, 1, 3});
    img.at(0, 0, 0) = 100.0;  // R
    img.at(0, 0, 1) = 50.0;   // G
    img.at(0, 0, 2) = 200.0;  // B
    Tensor gray = grayscale_601(hwc_to_chw(img));
    CHECK(gray[0] == doctest::Approx(0.299 * 100 + 0.587 * 50 + 0.114 * 200));
}
