#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dmask/tape.hpp"
#include "test_util.hpp"

using namespace dmask;
using testutil::backprop_grad;
using testutil::finite_diff_grad;
using testutil::max_rel_err;
using testutil::random_mat;

namespace {

template <class Builder>
void check_grad(const Mat& base, Builder&& builder, double tol = 1e-5) {
  const Mat bp = backprop_grad(base, builder);
  const Mat fd = finite_diff_grad(base, builder);
  CHECK(max_rel_err(bp, fd) < tol);
}

}  // namespace

TEST_CASE("matmul and add gradients match finite differences") {
  RngStream rng(7, "test");
  const Mat a = random_mat(3, 4, rng);
  const Mat b = random_mat(4, 2, rng);
  check_grad(a, [&](Tape& t, Var x) { return sum_all(matmul(x, t.constant(b))); });
  check_grad(b, [&](Tape& t, Var x) { return sum_all(matmul(t.constant(a), x)); });
  check_grad(a, [&](Tape& t, Var x) { return sum_all(cmul(add(x, x), x)); });
}

TEST_CASE("elementwise op gradients") {
  RngStream rng(8, "test");
  const Mat a = random_mat(2, 5, rng);
  check_grad(a, [](Tape& t, Var x) { return sum_all(tanh_of(x)); });
  check_grad(a, [](Tape& t, Var x) { return sum_all(gelu_of(x)); });
  check_grad(a, [](Tape& t, Var x) { return sum_all(cmul(scale(x, 2.5), x)); });
  check_grad(a, [](Tape& t, Var x) { return sum_all(cmul(transpose_of(x), transpose_of(x))); });
  const Mat b = random_mat(2, 5, rng);
  check_grad(a, [&](Tape& t, Var x) { return sum_all(cmul(sub(x, t.constant(b)), x)); });
}

TEST_CASE("broadcast, tile, slice, concat gradients") {
  RngStream rng(9, "test");
  const Mat a = random_mat(4, 3, rng);
  const Mat r = random_mat(1, 3, rng);
  check_grad(a, [&](Tape& t, Var x) { return sum_all(cmul(add_rowvec(x, t.constant(r)), x)); });
  check_grad(r, [&](Tape& t, Var x) { return sum_all(cmul(add_rowvec(t.constant(a), x),
                                                          t.constant(a))); });
  check_grad(r, [&](Tape& t, Var x) { return sum_all(cmul(tile_rows(x, 5), tile_rows(x, 5))); });
  check_grad(a, [](Tape& t, Var x) { return sum_all(cmul(slice_rows(x, 1, 2), slice_rows(x, 1, 2))); });
  check_grad(a, [](Tape& t, Var x) { return sum_all(cmul(slice_cols(x, 1, 2), slice_cols(x, 0, 2))); });
  check_grad(a, [](Tape& t, Var x) {
    const Var c = concat_cols(x, x);
    return sum_all(cmul(c, c));
  });
  check_grad(a, [](Tape& t, Var x) {
    const Var parts[] = {x, x};
    const Var c = concat_rows(std::span<const Var>(parts, 2));
    return sum_all(cmul(c, c));
  });
}

TEST_CASE("gather_rows accumulates repeated indices") {
  RngStream rng(10, "test");
  const Mat table = random_mat(6, 3, rng);
  check_grad(table, [](Tape& t, Var x) {
    const Var g = gather_rows(x, {0, 2, 2, 5});
    return sum_all(cmul(g, g));
  });
  Tape t;
  const Var table_v = t.leaf(table, false);
  CHECK_THROWS(gather_rows(table_v, {6}));
  CHECK_THROWS(gather_rows(table_v, {-1}));
}

TEST_CASE("softmax rows") {
  RngStream rng(11, "test");
  const Mat a = random_mat(3, 4, rng);
  Tape t;
  const Mat y = softmax_rows_of(t.leaf(a, false)).value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) CHECK(y.row(r).sum() == doctest::Approx(1.0));
  const Mat probe = random_mat(3, 4, rng);
  check_grad(a, [&](Tape& t, Var x) {
    return sum_all(cmul(softmax_rows_of(x), t.constant(probe)));
  });
}

TEST_CASE("layer norm matches finite differences for x, gamma, beta") {
  RngStream rng(12, "test");
  const Mat x = random_mat(3, 6, rng);
  const Mat g = random_mat(1, 6, rng);
  const Mat b = random_mat(1, 6, rng);
  const Mat probe = random_mat(3, 6, rng);
  const auto loss = [&](Tape& t, Var xs, Var gs, Var bs) {
    return sum_all(cmul(layer_norm_rows(xs, gs, bs), t.constant(probe)));
  };
  check_grad(x, [&](Tape& t, Var v) { return loss(t, v, t.constant(g), t.constant(b)); }, 1e-4);
  check_grad(g, [&](Tape& t, Var v) { return loss(t, t.constant(x), v, t.constant(b)); });
  check_grad(b, [&](Tape& t, Var v) { return loss(t, t.constant(x), t.constant(g), v); });
}

TEST_CASE("cross entropy from logits") {
  Tape t;
  Mat uniform = Mat::Zero(1, 16);
  CHECK(cross_entropy_logits(t.leaf(uniform, false), 3).scalar() ==
        doctest::Approx(std::log(16.0)));
  CHECK_THROWS(cross_entropy_logits(t.leaf(uniform, false), 16));
  CHECK_THROWS(cross_entropy_logits(t.leaf(uniform, false), -1));

  RngStream rng(13, "test");
  const Mat l = random_mat(1, 5, rng);
  check_grad(l, [](Tape& t, Var x) { return cross_entropy_logits(x, 2); });
}

TEST_CASE("div_by_scalar") {
  RngStream rng(14, "test");
  const Mat a = random_mat(2, 3, rng).array() + 3.0;  // keep the divisor away from 0
  const Mat probe = random_mat(2, 3, rng);
  check_grad(a, [&](Tape& t, Var x) {
    return sum_all(cmul(div_by_scalar(cmul(x, x), sum_all(x)), t.constant(probe)));
  }, 1e-4);
}

TEST_CASE("grad_reverse is identity forward and negation backward") {
  RngStream rng(15, "test");
  const Mat a = random_mat(2, 4, rng);
  Tape t;
  const Var x = t.leaf(a, true);
  const Var y = grad_reverse(x);
  CHECK(y.value() == a);  // bitwise
  const Var loss = sum_all(y);
  t.backward(loss);
  CHECK((t.grad(x.id).array() == -1.0).all());
}

TEST_CASE("straight_through emits hard forward and soft gradients") {
  RngStream rng(16, "test");
  const Mat soft_in = random_mat(3, 2, rng);
  Tape t;
  const Var s = t.leaf(soft_in, true);
  const Var sm = softmax_rows_of(s);
  Mat hard = Mat::Zero(3, 2);
  hard(0, 1) = hard(1, 0) = hard(2, 1) = 1.0;
  const Var st = straight_through(hard, sm);
  CHECK(st.value() == hard);
  const Mat probe = random_mat(3, 2, rng);
  t.backward(sum_all(cmul(st, t.constant(probe))));
  const Mat g_st = t.grad(s.id);

  Tape t2;
  const Var s2 = t2.leaf(soft_in, true);
  t2.backward(sum_all(cmul(softmax_rows_of(s2), t2.constant(probe))));
  CHECK(max_rel_err(g_st, t2.grad(s2.id)) < 1e-12);
}

TEST_CASE("blend_rows mixes rows exactly and differentiates") {
  RngStream rng(17, "test");
  const Mat e = random_mat(4, 3, rng);
  const Mat r = random_mat(1, 3, rng);
  Mat m(4, 1);
  m << 0.0, 1.0, 0.0, 1.0;
  Tape t;
  const Var y = blend_rows(t.leaf(e, false), t.leaf(m, false), t.leaf(r, false));
  CHECK(y.value().row(0) == e.row(0));  // hard keep is exact
  CHECK(y.value().row(1) == r.row(0));  // hard mask is exact
  const Mat probe = random_mat(4, 3, rng);
  Mat msoft(4, 1);
  msoft << 0.3, 0.8, 0.1, 0.5;
  check_grad(e, [&](Tape& t, Var x) {
    return sum_all(cmul(blend_rows(x, t.constant(msoft), t.constant(r)), t.constant(probe)));
  });
  check_grad(msoft, [&](Tape& t, Var x) {
    return sum_all(cmul(blend_rows(t.constant(e), x, t.constant(r)), t.constant(probe)));
  });
  check_grad(r, [&](Tape& t, Var x) {
    return sum_all(cmul(blend_rows(t.constant(e), t.constant(msoft), x), t.constant(probe)));
  });
}

TEST_CASE("dropout applies one mask to forward and backward") {
  const Mat a = Mat::Ones(20, 20);
  Tape t;
  const Var x = t.leaf(a, true);
  RngStream drop_rng(5, "dropout");
  const Var y = dropout_of(x, 0.4, drop_rng);
  t.backward(sum_all(y));
  const Mat& yv = y.value();
  const Mat& g = t.grad(x.id);
  for (Eigen::Index r = 0; r < 20; ++r)
    for (Eigen::Index c = 0; c < 20; ++c) {
      CHECK(((yv(r, c) == 0.0) || (yv(r, c) == doctest::Approx(1.0 / 0.6))));
      CHECK(g(r, c) == yv(r, c));
    }
  CHECK_THROWS(dropout_of(x, 1.0, drop_rng));
}

TEST_CASE("rng streams are deterministic and name-separated") {
  RngStream a1(42, "gumbel"), a2(42, "gumbel"), b(42, "init");
  for (int i = 0; i < 100; ++i) CHECK(a1.next_u64() == a2.next_u64());
  bool differs = false;
  RngStream a3(42, "gumbel");
  for (int i = 0; i < 100; ++i) differs = differs || (a3.next_u64() != b.next_u64());
  CHECK(differs);
}
