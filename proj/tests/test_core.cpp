// Copyright (c) the TLZMC Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tlzmc/core/adam.hpp"
#include "tlzmc/core/module.hpp"

using namespace tlzmc;
using tlzmc::testing::DTensor;
using tlzmc::testing::DVar;
using tlzmc::testing::fd_check;
using tlzmc::testing::random_tensor;

namespace {
DVar dv(DTensor t) { return DVar(std::move(t), true); }
}  // namespace

TEST_CASE("rng is deterministic per seed") {
  Rng a(1234), b(1234), c(99);
  bool all_eq = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    uint64_t x = a.next_u64();
    all_eq = all_eq && (x == b.next_u64());
    any_diff = any_diff || (x != c.next_u64());
  }
  REQUIRE(all_eq);
  REQUIRE(any_diff);
}

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(7);
  auto a = dv(random_tensor(rng, {2, 3, 4}, 0.2, 1.5));
  auto b = dv(random_tensor(rng, {2, 3, 4}, 0.2, 1.5));

  auto run = [&](std::function<DVar()> f) {
    auto rep = fd_check({a, b}, f);
    CAPTURE(rep.max_abs_err);
    REQUIRE(rep.max_rel_err < 1e-5);
  };

  run([&] { return sum_all(add(a, b)); });
  run([&] { return sum_all(mul(sub(a, b), sub(a, b))); });
  run([&] { return sum_all(mul(a, b)); });
  run([&] { return sum_all(div_v(a, b)); });
  run([&] { return sum_all(sigmoid_v(a)); });
  run([&] { return sum_all(exp_v(neg(a))); });
  run([&] { return sum_all(log_v(a)); });
  run([&] { return sum_all(softplus_v(sub(a, b))); });
  run([&] { return sum_all(erf_v(sub(a, b))); });
  run([&] { return mean_all(mul(a, a)); });
  run([&] { return mse_loss(a, b); });
  run([&] { return sum_all(mul_scalar(add_scalar(a, 0.3), -1.7)); });
}

TEST_CASE("kinked ops match finite differences away from kinks") {
  Rng rng(8);
  // Values well away from 0 and the clamp bounds so the FD step stays on one
  // side of each kink.
  auto a = dv(random_tensor(rng, {2, 4, 4}, 0.1, 0.9));
  auto b = dv(random_tensor(rng, {2, 4, 4}, -0.9, -0.1));

  auto rep = fd_check({a, b}, [&] {
    auto pos = leaky_relu(a, 0.2);
    auto negs = leaky_relu(b, 0.2);
    auto cl = clamp_v(add(a, b), -5.0, 5.0);
    auto cm = clamp_min_v(a, -1.0);
    return sum_all(add(add(pos, negs), add(cl, cm)));
  });
  REQUIRE(rep.max_rel_err < 1e-5);
}

TEST_CASE("round_ste is identity in the backward pass") {
  DTensor t({1, 2, 2});
  t.data = {0.4, 0.5, -0.5, -1.6};
  DVar a(t, true);
  auto y = round_ste(a);
  REQUIRE(y.value().data == std::vector<double>{0.0, 1.0, -1.0, -2.0});
  sum_all(mul_scalar(y, 3.0)).backward();
  for (int i = 0; i < 4; ++i) REQUIRE(a.grad()[i] == 3.0);
}

TEST_CASE("structural ops match finite differences") {
  Rng rng(9);
  auto a = dv(random_tensor(rng, {2, 4, 4}));
  auto b = dv(random_tensor(rng, {3, 4, 4}));
  auto s = dv(random_tensor(rng, {5}, 0.5, 1.5));
  auto bias = dv(random_tensor(rng, {5}));

  auto rep = fd_check({a, b, s, bias}, [&] {
    auto cat = concat_c<double>({a, b});
    auto af = channel_affine(cat, s, bias);
    auto sl = slice_c(af, 1, 4);
    auto cr = crop_hw(sl, 3, 2);
    auto sm = softmax_c(af);
    return add(sum_all(mul(cr, cr)), sum_all(mul(sm, sm)));
  });
  REQUIRE(rep.max_rel_err < 1e-5);
}

TEST_CASE("spatial ops match finite differences") {
  Rng rng(10);
  auto a = dv(random_tensor(rng, {2, 6, 6}));

  auto rep = fd_check({a}, [&] {
    return add(sum_all(mul(avg_pool2d(a, 2), avg_pool2d(a, 2))),
               sum_all(mul(upsample_bilinear2(a), upsample_bilinear2(a))));
  });
  REQUIRE(rep.max_rel_err < 1e-5);
}

TEST_CASE("warp with zero flow is exact identity") {
  Rng rng(11);
  auto src = dv(random_tensor(rng, {3, 5, 7}));
  DVar flow(DTensor({2, 5, 7}), false);
  auto out = warp_bilinear(src, flow);
  REQUIRE(out.value().data == src.value().data);
}

TEST_CASE("warp is linear in the source") {
  Rng rng(12);
  auto src = random_tensor(rng, {3, 8, 8});
  auto fl = random_tensor(rng, {2, 8, 8}, -2.0, 2.0);
  DVar flow(fl, false);
  auto w1 = warp_bilinear(DVar(src, false), flow);
  DTensor scaled = src;
  for (auto& v : scaled.data) v *= 3.25;
  auto w2 = warp_bilinear(DVar(scaled, false), flow);
  for (int64_t i = 0; i < w1.numel(); ++i)
    REQUIRE(std::abs(w2.value()[i] - 3.25 * w1.value()[i]) < 1e-6);
}

TEST_CASE("warp gradients match finite differences") {
  Rng rng(13);
  auto src = dv(random_tensor(rng, {2, 6, 6}));
  // Fractional offsets away from integers and borders keep the sampling in a
  // smooth region for the FD probe.
  DTensor fl({2, 6, 6});
  for (auto& v : fl.data) v = rng.uniform(-1.3, 1.3);
  for (auto& v : fl.data)
    if (std::abs(v - std::round(v)) < 0.05) v += 0.11;
  auto flow = dv(fl);

  auto rep = fd_check({src, flow}, [&] {
    auto w = warp_bilinear(src, flow);
    return sum_all(mul(w, w));
  });
  REQUIRE(rep.max_rel_err < 1e-4);
}

TEST_CASE("conv2d matches finite differences") {
  Rng rng(14);
  auto x = dv(random_tensor(rng, {3, 6, 6}));
  auto w = dv(random_tensor(rng, {4, 3, 3, 3}, -0.5, 0.5));
  auto b = dv(random_tensor(rng, {4}));

  for (int stride : {1, 2}) {
    auto rep = fd_check({x, w, b}, [&] {
      auto y = conv2d(x, w, b, stride, 1);
      return sum_all(mul(y, y));
    });
    CAPTURE(stride, rep.max_abs_err);
    REQUIRE(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("conv_transpose2d matches finite differences") {
  Rng rng(15);
  auto x = dv(random_tensor(rng, {3, 4, 4}));
  auto w = dv(random_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5));
  auto b = dv(random_tensor(rng, {2}));

  for (int stride : {1, 2}) {
    auto rep = fd_check({x, w, b}, [&] {
      auto y = conv_transpose2d(x, w, b, stride, 1, stride - 1);
      return sum_all(mul(y, y));
    });
    CAPTURE(stride, rep.max_abs_err);
    REQUIRE(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("conv2d computes a known value") {
  // 1-channel 3x3 all-ones kernel over an all-ones 3x3 input, pad 1: the
  // center output sees all 9 taps.
  DVar x(DTensor({1, 3, 3}, 1.0), false);
  DVar w(DTensor({1, 1, 3, 3}, 1.0), false);
  auto y = conv2d(x, w, DVar(), 1, 1);
  REQUIRE(y.value().at(0, 1, 1) == 9.0);
  REQUIRE(y.value().at(0, 0, 0) == 4.0);
}

TEST_CASE("transposed conv doubles spatial size with stride 2") {
  Rng rng(16);
  ParamStoreT<double> ps;
  Conv2dT<double> up(ps, rng, "up", 3, 5, 5, 2, true, Init::kHe, false);
  DVar x(random_tensor(rng, {3, 7, 9}), false);
  auto y = up(x);
  REQUIRE(y.value().shape == std::vector<int>{5, 14, 18});
}

TEST_CASE("conv macs follow the output-grid formula") {
  Rng rng(17);
  ParamStoreT<double> ps;
  Conv2dT<double> c(ps, rng, "c", 1, 1, 3, 1, false, Init::kHe, false);
  REQUIRE(c.macs(8, 8) == 576);
  Conv2dT<double> c2(ps, rng, "c2", 16, 32, 5, 2, false, Init::kHe, false);
  REQUIRE(c2.macs(64, 64) == 32LL * 32 * 32 * 16 * 25);
  Conv2dT<double> t(ps, rng, "t", 16, 8, 5, 2, true, Init::kHe, false);
  REQUIRE(t.macs(32, 32) == 64LL * 64 * 8 * 16 * 25);
}

TEST_CASE("frame-type adaptation selects independent channel affines") {
  Rng rng(18);
  ParamStoreT<double> ps;
  Conv2dT<double> c(ps, rng, "c", 2, 3, 3, 1, false, Init::kHe, true);
  ps.at("c.fa_s0").mutable_value().data = {2.0, 2.0, 2.0};
  ps.at("c.fa_b1").mutable_value().data = {0.5, 0.5, 0.5};
  DVar x(random_tensor(rng, {2, 4, 4}), false);
  auto none = c(x, -1);
  auto ref = c(x, 0);
  auto nonref = c(x, 1);
  for (int64_t i = 0; i < none.numel(); ++i) {
    REQUIRE(ref.value()[i] == Catch::Approx(2.0 * none.value()[i]));
    REQUIRE(nonref.value()[i] == Catch::Approx(none.value()[i] + 0.5));
  }
}

TEST_CASE("freezing removes parameters from tape and optimizer") {
  Rng rng(19);
  ParamStoreT<double> ps;
  Conv2dT<double> c1(ps, rng, "m1.c", 2, 2, 3, 1, false, Init::kHe, false);
  Conv2dT<double> c2(ps, rng, "m2.c", 2, 2, 3, 1, false, Init::kHe, false);
  ps.set_trainable("m1.", false);

  auto before = ps.snapshot("m1.");
  DVar x(random_tensor(rng, {2, 4, 4}), false);
  AdamT<double> opt(ps, 1e-2);
  for (int it = 0; it < 3; ++it) {
    ps.zero_grads();
    auto loss = mse_loss(c2(c1(x)), DVar(DTensor({2, 4, 4}, 0.5), false));
    loss.backward();
    opt.step();
  }
  auto after = ps.snapshot("m1.");
  for (const auto& [name, t] : before)
    REQUIRE(t.data == after.at(name).data);  // bit-identical
  // ...while the trainable module moved.
  bool moved = false;
  for (const auto& [name, v] : ps.snapshot("m2."))
    (void)name, moved = true;
  REQUIRE(moved);
}

TEST_CASE("adam reduces a simple regression loss") {
  Rng rng(20);
  ParamStoreT<double> ps, teacher_ps;
  Conv2dT<double> c(ps, rng, "c", 1, 1, 3, 1, false, Init::kHe, false);
  Conv2dT<double> teacher(teacher_ps, rng, "t", 1, 1, 3, 1, false, Init::kHe,
                          false);
  DVar x(random_tensor(rng, {1, 8, 8}), false);
  DVar target = [&] {
    NoGradGuard ng;
    return teacher(x);
  }();
  AdamT<double> opt(ps, 1e-2);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 50; ++it) {
    ps.zero_grads();
    auto loss = mse_loss(c(x), target);
    if (it == 0) first = loss.value()[0];
    last = loss.value()[0];
    loss.backward();
    opt.step();
  }
  REQUIRE(last < 0.5 * first);
}

TEST_CASE("gradients accumulate across backward calls until cleared") {
  DVar a(DTensor({1, 1, 1}, 2.0), true);
  auto f = [&] { return sum_all(mul(a, a)); };
  f().backward();
  REQUIRE(a.grad()[0] == Catch::Approx(4.0));
  f().backward();
  REQUIRE(a.grad()[0] == Catch::Approx(8.0));
  a.zero_grad();
  f().backward();
  REQUIRE(a.grad()[0] == Catch::Approx(4.0));
}

TEST_CASE("no-grad mode builds no tape") {
  DVar a(DTensor({1, 1, 1}, 2.0), true);
  NoGradGuard ng;
  auto y = sum_all(mul(a, a));
  REQUIRE_FALSE(y.requires_grad());
}
