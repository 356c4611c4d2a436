// Tensor container semantics and the resampling/morphology kernels.
// Resize oracles are hand-computed footprints; blur and erosion are checked
// against direct window scans written independently here.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "warp4d/rng.hpp"
#include "warp4d/tensor.hpp"

using namespace warp4d;

TEST_CASE("tensor construction, indexing, frame slicing, site count") {
    Tensor t = Tensor::video(2, 3, 4, 2);
    CHECK(t.ndim() == 4);
    CHECK(t.size() == 2u * 3 * 4 * 2);
    CHECK(t.site_count() == 2u * 3 * 4);
    t.at(1, 2, 3, 1) = 7.5;
    CHECK(t[t.size() - 1] == 7.5);

    Tensor f = t.frame(1);
    CHECK(f.shape() == std::vector<int>{3, 4, 2});
    CHECK(f.at(2, 3, 1) == 7.5);

    Tensor scalarish({3}, 2.0);
    CHECK(scalarish.site_count() == 1u);

    CHECK_THROWS_AS(Tensor({2, -1}), DimensionError);
    CHECK(Tensor({0, 4}).size() == 0u);  // zero-sized dims are legal, negatives are not
    CHECK_THROWS_AS(t.frame(2), DimensionError);

    Tensor a({2, 2}), b({2, 3});
    CHECK_THROWS_AS(require_same_shape(a, b, "test"), DimensionError);
}

TEST_CASE("area resize averages exact footprints") {
    // 2x2 -> 1x1 is the plain mean.
    Tensor t({2, 2});
    t.at(0, 0) = 1.0;
    t.at(0, 1) = 2.0;
    t.at(1, 0) = 3.0;
    t.at(1, 1) = 4.0;
    Tensor one = area_resize(t, 1, 1);
    CHECK(one.at(0, 0) == doctest::Approx(2.5).epsilon(1e-12));

    // 3 -> 2 along one axis: each output covers 1.5 input pixels, so
    // out0 = (a + b/2) / 1.5, out1 = (b/2 + c) / 1.5.
    Tensor row({1, 3});
    row.at(0, 0) = 6.0;
    row.at(0, 1) = 0.0;
    row.at(0, 2) = 3.0;
    Tensor two = area_resize(row, 1, 2);
    CHECK(two.at(0, 0) == doctest::Approx(6.0 / 1.5).epsilon(1e-12));
    CHECK(two.at(0, 1) == doctest::Approx(3.0 / 1.5).epsilon(1e-12));

    // Mass preservation at any scale: mean in == mean out.
    Rng rng(3);
    Tensor img({7, 11, 3});
    for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    Tensor small = area_resize(img, 3, 5);
    double min = 0, mout = 0;
    for (size_t i = 0; i < img.size(); ++i) min += img[i];
    for (size_t i = 0; i < small.size(); ++i) mout += small[i];
    CHECK(min / static_cast<double>(img.size()) ==
          doctest::Approx(mout / static_cast<double>(small.size())).epsilon(1e-12));

    // Identity when the size is unchanged.
    Tensor same = area_resize(img, 7, 11);
    for (size_t i = 0; i < img.size(); ++i) CHECK(same[i] == doctest::Approx(img[i]).epsilon(1e-12));

    CHECK_THROWS_AS(area_resize(img, 0, 5), DimensionError);
    CHECK_THROWS_AS(area_resize(Tensor({2, 2, 3, 4}), 1, 1), DimensionError);
}

TEST_CASE("bilinear resize uses half-pixel centers and clamps the border") {
    Tensor t({1, 2});
    t.at(0, 0) = 0.0;
    t.at(0, 1) = 1.0;
    // Upsample 2 -> 4: output centers sample source coords -0.25, 0.25, 0.75,
    // 1.25; clamped to [0, 1] that reads 0, 0.25, 0.75, 1.
    Tensor up = bilinear_resize(t, 1, 4);
    CHECK(up.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(up.at(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(up.at(0, 2) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(up.at(0, 3) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(5);
    Tensor img({6, 9, 2});
    for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    Tensor same = bilinear_resize(img, 6, 9);
    for (size_t i = 0; i < img.size(); ++i) CHECK(same[i] == doctest::Approx(img[i]).epsilon(1e-12));
}

TEST_CASE("box blur matches a direct in-bounds window scan") {
    Rng rng(9);
    Tensor img({6, 7});
    for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();

    Tensor id = box_blur(img, 0);
    for (size_t i = 0; i < img.size(); ++i) CHECK(id[i] == img[i]);

    for (int r : {1, 2}) {
        Tensor blurred = box_blur(img, r);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 7; ++x) {
                double sum = 0.0;
                int n = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= 6 || xx < 0 || xx >= 7) continue;
                        sum += img.at(yy, xx);
                        ++n;
                    }
                CHECK(blurred.at(y, x) == doctest::Approx(sum / n).epsilon(1e-12));
            }
    }
    CHECK_THROWS_AS(box_blur(img, -1), DomainError);
    CHECK_THROWS_AS(box_blur(Tensor({2, 2, 3}), 1), DimensionError);
}

TEST_CASE("erosion removes boundary pixels one ring per step") {
    Tensor mask({5, 6}, 0.0);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 4; ++x) mask.at(y, x) = 1.0;

    Tensor e1 = erode(mask, 1);
    // Only the interior of the 3x4 block survives: row 2, cols 2..3.
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) {
            double want = (y == 2 && (x == 2 || x == 3)) ? 1.0 : 0.0;
            CHECK(e1.at(y, x) == want);
        }

    Tensor e2 = erode(mask, 2);
    for (size_t i = 0; i < e2.size(); ++i) CHECK(e2[i] == 0.0);

    Tensor full({3, 3}, 1.0);
    // Out-of-bounds neighbors count as background, so one step of a 3x3
    // all-ones mask keeps only the center pixel.
    Tensor fe = erode(full, 1);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            CHECK(fe.at(y, x) == ((y == 1 && x == 1) ? 1.0 : 0.0));

    Tensor same = erode(mask, 0);
    for (size_t i = 0; i < mask.size(); ++i) CHECK(same[i] == mask[i]);
}
