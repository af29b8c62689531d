#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "catnet/ops.hpp"
#include "catnet/rng.hpp"
#include "catnet/sparse.hpp"
#include "oracles.hpp"

using namespace catnet;
using ad::Tensor;

namespace {

Tensor random_tensor(int rows, int cols, Rng& rng, bool requires_grad, double lo = -2.0,
                     double hi = 2.0) {
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::from_data(rows, cols, std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and hand-computed products") {
  ad::Tape tape;
  Tensor eye = Tensor::from_data(2, 2, {1, 0, 0, 1});
  Tensor m = Tensor::from_data(2, 2, {3, -1, 7, 2});
  Tensor r = ad::matmul(tape, eye, m);
  CHECK(r.data() == m.data());

  Tensor a = Tensor::from_data(2, 2, {1, 2, 3, 4});
  Tensor b = Tensor::from_data(2, 1, {0, 1});
  Tensor c = ad::matmul(tape, a, b);
  CHECK(c.at(0, 0) == 2.0);
  CHECK(c.at(1, 0) == 4.0);
}

TEST_CASE("matmul rejects dimension mismatch") {
  ad::Tape tape;
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(4, 2);
  CHECK_THROWS_AS(ad::matmul(tape, a, b), std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences at 1e-6") {
  Rng rng(7);
  Tensor a = random_tensor(5, 4, rng, true);
  Tensor b = random_tensor(4, 3, rng, true);
  auto loss_value = [&]() {
    ad::Tape t;
    return ad::sum_all(t, ad::matmul(t, a, b)).value();
  };
  {
    ad::Tape t;
    Tensor loss = ad::sum_all(t, ad::matmul(t, a, b));
    t.backward(loss);
  }
  CHECK(oracle::max_fd_rel_err(a, loss_value) <= 1e-6);
  CHECK(oracle::max_fd_rel_err(b, loss_value) <= 1e-6);
}

TEST_CASE("leaky_relu values and subgradient convention") {
  ad::Tape tape;
  Tensor x = Tensor::from_data(1, 3, {2.0, -5.0, 0.0});
  Tensor y = ad::leaky_relu(tape, x, 0.2);
  CHECK(y.at(0, 0) == 2.0);
  CHECK(y.at(0, 1) == -1.0);
  CHECK(y.at(0, 2) == 0.0);
  CHECK_THROWS_AS(ad::leaky_relu(tape, x, -0.1), std::invalid_argument);

  // Subgradient at exactly 0 is the negative-slope branch.
  Tensor z = Tensor::from_data(1, 1, {0.0}, true);
  ad::Tape t2;
  Tensor loss = ad::sum_all(t2, ad::leaky_relu(t2, z, 0.2));
  t2.backward(loss);
  CHECK(z.grad()[0] == 0.2);
}

TEST_CASE("leaky_relu gradient at -3 equals the slope by finite difference") {
  Tensor x = Tensor::from_data(1, 1, {-3.0}, true);
  auto loss_value = [&]() {
    ad::Tape t;
    return ad::sum_all(t, ad::leaky_relu(t, x, 0.2)).value();
  };
  {
    ad::Tape t;
    Tensor loss = ad::sum_all(t, ad::leaky_relu(t, x, 0.2));
    t.backward(loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(oracle::max_fd_rel_err(x, loss_value) <= 1e-6);
}

TEST_CASE("segment_softmax values against the scalar oracle") {
  ad::Tape tape;

  Tensor equal = Tensor::from_data(3, 1, {1.5, 1.5, 1.5});
  Tensor ye = ad::segment_softmax(tape, equal, {0, 0, 0}, 1);
  for (int i = 0; i < 3; ++i) CHECK(ye.at(i, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Tensor single = Tensor::from_data(1, 1, {-17.0});
  CHECK(ad::segment_softmax(tape, single, {0}, 1).at(0, 0) == 1.0);

  // softmax([1,2,3]) from the independent exp/sum oracle.
  Tensor ramp = Tensor::from_data(3, 1, {1, 2, 3});
  Tensor yr = ad::segment_softmax(tape, ramp, {0, 0, 0}, 1);
  CHECK(yr.at(0, 0) == doctest::Approx(0.09003057317038046).epsilon(1e-14));
  CHECK(yr.at(1, 0) == doctest::Approx(0.24472847105479764).epsilon(1e-14));
  CHECK(yr.at(2, 0) == doctest::Approx(0.6652409557748218).epsilon(1e-14));
  const std::vector<double> ref = oracle::softmax({1, 2, 3});
  for (int i = 0; i < 3; ++i) CHECK(yr.at(i, 0) == doctest::Approx(ref[i]).epsilon(1e-15));
}

TEST_CASE("segment_softmax rejects empty segments and bad ids") {
  ad::Tape tape;
  Tensor x = Tensor::from_data(2, 1, {0.0, 1.0});
  CHECK_THROWS_AS(ad::segment_softmax(tape, x, {0, 0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(ad::segment_softmax(tape, x, {1, 0}, 2), std::invalid_argument);
}

TEST_CASE("segment_softmax normalization and shift invariance") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_seg = 1 + rng.uniform_int(5);
    std::vector<int> seg;
    for (int s = 0; s < n_seg; ++s) {
      const int len = 1 + rng.uniform_int(6);
      for (int k = 0; k < len; ++k) seg.push_back(s);
    }
    const int n = static_cast<int>(seg.size());
    Tensor x = random_tensor(n, 1, rng, false, -3.0, 3.0);

    ad::Tape tape;
    Tensor y = ad::segment_softmax(tape, x, seg, n_seg);
    std::vector<double> sums(static_cast<std::size_t>(n_seg), 0.0);
    for (int i = 0; i < n; ++i) {
      CHECK(y.at(i, 0) > 0.0);
      sums[static_cast<std::size_t>(seg[static_cast<std::size_t>(i)])] += y.at(i, 0);
    }
    for (double s : sums) CHECK(std::abs(s - 1.0) <= 1e-12);

    // Adding a constant inside every segment leaves the output unchanged.
    Tensor shifted = Tensor::from_data(n, 1, x.data());
    const double c = rng.uniform(-5.0, 5.0);
    for (double& v : shifted.data()) v += c;
    Tensor y2 = ad::segment_softmax(tape, shifted, seg, n_seg);
    for (int i = 0; i < n; ++i) CHECK(std::abs(y.at(i, 0) - y2.at(i, 0)) <= 1e-12);
  }
}

TEST_CASE("every differentiable op passes central finite differences") {
  Rng rng(23);
  const double tol = 1e-4;

  SUBCASE("add sub mul") {
    Tensor a = random_tensor(3, 4, rng, true);
    Tensor b = random_tensor(3, 4, rng, true);
    auto loss_value = [&]() {
      ad::Tape t;
      Tensor s = ad::add(t, ad::mul(t, a, b), ad::sub(t, a, b));
      return ad::sum_all(t, s).value();
    };
    {
      ad::Tape t;
      Tensor s = ad::add(t, ad::mul(t, a, b), ad::sub(t, a, b));
      Tensor loss = ad::sum_all(t, s);
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
    CHECK(oracle::max_fd_rel_err(b, loss_value) <= tol);
  }

  SUBCASE("div") {
    Tensor a = random_tensor(3, 3, rng, true);
    Tensor b = random_tensor(3, 3, rng, true, 0.5, 2.5);  // bounded away from zero
    auto loss_value = [&]() {
      ad::Tape t;
      return ad::sum_all(t, ad::div(t, a, b)).value();
    };
    {
      ad::Tape t;
      Tensor loss = ad::sum_all(t, ad::div(t, a, b));
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
    CHECK(oracle::max_fd_rel_err(b, loss_value) <= tol);
  }

  SUBCASE("scale by constant and by scalar tensor") {
    Tensor a = random_tensor(2, 5, rng, true);
    Tensor s = Tensor::scalar(rng.uniform(-2.0, 2.0), true);
    auto loss_value = [&]() {
      ad::Tape t;
      return ad::sum_all(t, ad::scale(t, ad::scale(t, a, -1.7), s)).value();
    };
    {
      ad::Tape t;
      Tensor loss = ad::sum_all(t, ad::scale(t, ad::scale(t, a, -1.7), s));
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
    CHECK(oracle::max_fd_rel_err(s, loss_value) <= tol);
  }

  SUBCASE("exp sigmoid elu") {
    Tensor a = random_tensor(3, 4, rng, true);
    auto loss_value = [&]() {
      ad::Tape t;
      Tensor y = ad::add(t, ad::exp(t, a), ad::add(t, ad::sigmoid(t, a), ad::elu(t, a)));
      return ad::sum_all(t, y).value();
    };
    {
      ad::Tape t;
      Tensor y = ad::add(t, ad::exp(t, a), ad::add(t, ad::sigmoid(t, a), ad::elu(t, a)));
      Tensor loss = ad::sum_all(t, y);
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
  }

  SUBCASE("leaky_relu away from the kink") {
    Tensor a = random_tensor(4, 4, rng, true);
    for (double& v : a.data())
      if (std::abs(v) < 1e-3) v = 0.5;  // exclusion window around 0
    auto loss_value = [&]() {
      ad::Tape t;
      return ad::sum_all(t, ad::leaky_relu(t, a, 0.2)).value();
    };
    {
      ad::Tape t;
      Tensor loss = ad::sum_all(t, ad::leaky_relu(t, a, 0.2));
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
  }

  SUBCASE("transpose slice concat gather") {
    Tensor a = random_tensor(4, 3, rng, true);
    Tensor b = random_tensor(4, 2, rng, true);
    const std::vector<int> idx = {3, 0, 0, 2, 1};
    auto loss_value = [&]() {
      ad::Tape t;
      Tensor cat = ad::concat_cols(t, {a, b});
      Tensor g = ad::gather_rows(t, cat, idx);
      Tensor tr = ad::transpose(t, g);
      Tensor sl = ad::slice_rows(t, tr, 1, 4);
      return ad::sum_squares(t, sl).value();
    };
    {
      ad::Tape t;
      Tensor cat = ad::concat_cols(t, {a, b});
      Tensor g = ad::gather_rows(t, cat, idx);
      Tensor tr = ad::transpose(t, g);
      Tensor sl = ad::slice_rows(t, tr, 1, 4);
      Tensor loss = ad::sum_squares(t, sl);
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
    CHECK(oracle::max_fd_rel_err(b, loss_value) <= tol);
  }

  SUBCASE("segment_sum row_sum rowscale") {
    Tensor a = random_tensor(6, 3, rng, true);
    Tensor w = random_tensor(6, 1, rng, true);
    const std::vector<int> seg = {0, 0, 1, 2, 2, 2};
    auto loss_value = [&]() {
      ad::Tape t;
      Tensor rs = ad::rowscale(t, a, w);
      Tensor ss = ad::segment_sum(t, rs, seg, 3);
      return ad::sum_all(t, ad::row_sum(t, ss)).value();
    };
    {
      ad::Tape t;
      Tensor rs = ad::rowscale(t, a, w);
      Tensor ss = ad::segment_sum(t, rs, seg, 3);
      Tensor loss = ad::sum_all(t, ad::row_sum(t, ss));
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
    CHECK(oracle::max_fd_rel_err(w, loss_value) <= tol);
  }

  SUBCASE("segment_softmax") {
    Tensor a = random_tensor(7, 1, rng, true);
    const std::vector<int> seg = {0, 0, 0, 1, 1, 2, 2};
    // Square the output so the loss actually depends on within-segment shape.
    auto loss_value = [&]() {
      ad::Tape t;
      Tensor y = ad::segment_softmax(t, a, seg, 3);
      return ad::sum_squares(t, y).value();
    };
    {
      ad::Tape t;
      Tensor y = ad::segment_softmax(t, a, seg, 3);
      Tensor loss = ad::sum_squares(t, y);
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
  }

  SUBCASE("dropout with a frozen mask") {
    Tensor a = random_tensor(5, 4, rng, true);
    auto loss_value = [&]() {
      ad::Tape t;
      Rng mask_rng(99);  // same stream every evaluation
      return ad::sum_squares(t, ad::dropout(t, a, 0.4, mask_rng, true)).value();
    };
    {
      ad::Tape t;
      Rng mask_rng(99);
      Tensor loss = ad::sum_squares(t, ad::dropout(t, a, 0.4, mask_rng, true));
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
  }

  SUBCASE("log_softmax + masked nll") {
    Tensor a = random_tensor(5, 3, rng, true);
    const std::vector<int> labels = {0, 2, 1, 0, 2};
    const std::vector<bool> mask = {true, false, true, true, false};
    auto loss_value = [&]() {
      ad::Tape t;
      return ad::nll_masked(t, ad::log_softmax_rows(t, a), labels, mask).value();
    };
    {
      ad::Tape t;
      Tensor loss = ad::nll_masked(t, ad::log_softmax_rows(t, a), labels, mask);
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
  }

  SUBCASE("sq_err_sum and sum_squares") {
    Tensor a = random_tensor(4, 2, rng, true);
    const std::vector<double> target = {1, 0, -1, 0.5, 2, -2, 0, 1};
    auto loss_value = [&]() {
      ad::Tape t;
      Tensor l = ad::add(t, ad::sq_err_sum(t, a, target), ad::sum_squares(t, a));
      return l.value();
    };
    {
      ad::Tape t;
      Tensor loss = ad::add(t, ad::sq_err_sum(t, a, target), ad::sum_squares(t, a));
      t.backward(loss);
    }
    CHECK(oracle::max_fd_rel_err(a, loss_value) <= tol);
  }
}

TEST_CASE("backward on a consumed tape is rejected; reset recovers") {
  Tensor a = Tensor::from_data(2, 2, {1, 2, 3, 4}, true);
  ad::Tape tape;
  Tensor loss = ad::sum_all(tape, ad::mul(tape, a, a));
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  tape.reset();
  a.zero_grad();
  ad::Tape t2;
  Tensor loss2 = ad::sum_all(t2, ad::mul(t2, a, a));
  t2.backward(loss2);
  CHECK(a.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("non-finite forward results are an error state") {
  ad::Tape tape;
  Tensor big = Tensor::from_data(1, 1, {1000.0});
  CHECK_THROWS_AS(ad::exp(tape, big), std::runtime_error);  // overflows to inf
  Tensor zero = Tensor::from_data(1, 1, {0.0});
  Tensor one = Tensor::from_data(1, 1, {1.0});
  CHECK_THROWS_AS(ad::div(tape, one, zero), std::runtime_error);
}

TEST_CASE("dropout is identity at eval time and inversely scaled at train time") {
  Rng rng(5);
  Tensor a = random_tensor(40, 25, rng, false, 1.0, 2.0);
  ad::Tape tape;
  Rng mask_rng(1);
  Tensor eval_out = ad::dropout(tape, a, 0.6, mask_rng, false);
  CHECK(eval_out.same_storage(a));

  Tensor train_out = ad::dropout(tape, a, 0.6, mask_rng, true);
  int zeros = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (train_out.data()[i] == 0.0)
      ++zeros;
    else
      CHECK(train_out.data()[i] == doctest::Approx(a.data()[i] / 0.4).epsilon(1e-12));
  }
  // ~60% of 1000 entries; loose band.
  CHECK(zeros > 480);
  CHECK(zeros < 720);
}

TEST_CASE("sparse input path matches the dense ops bit for bit") {
  Rng rng(31);
  // ~80% zeros, like bag-of-words features.
  Tensor dense = Tensor::zeros(12, 9);
  for (double& v : dense.data())
    if (rng.uniform() < 0.2) v = rng.uniform(-1.0, 1.0);
  auto sp = std::make_shared<const ad::SparseFeatures>(ad::SparseFeatures::from_dense(dense));
  CHECK(sp->density() <= 0.35);

  Tensor w = random_tensor(9, 4, rng, true);
  ad::Tape tape;
  Tensor a = ad::matmul(tape, dense, w);
  Tensor b = ad::sparse_matmul(tape, sp, w);
  CHECK(a.data() == b.data());  // same accumulation order per row

  // Gradient through the weight matrix.
  auto loss_value = [&]() {
    ad::Tape t;
    return ad::sum_squares(t, ad::sparse_matmul(t, sp, w)).value();
  };
  w.zero_grad();
  {
    ad::Tape t;
    Tensor loss = ad::sum_squares(t, ad::sparse_matmul(t, sp, w));
    t.backward(loss);
  }
  CHECK(oracle::max_fd_rel_err(w, loss_value) <= 1e-4);

  // Train-time sparse dropout only rescales surviving nonzeros.
  Rng mask_rng(3);
  ad::SparseFeatures dropped = ad::sparse_dropout(*sp, 0.5, mask_rng, true);
  CHECK(dropped.nnz() == sp->nnz());
  for (std::size_t k = 0; k < dropped.values.size(); ++k) {
    const double v = dropped.values[k];
    CHECK((v == 0.0 || v == doctest::Approx(2.0 * sp->values[k]).epsilon(1e-15)));
  }
  Rng eval_rng(3);
  ad::SparseFeatures same = ad::sparse_dropout(*sp, 0.5, eval_rng, false);
  CHECK(same.values == sp->values);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_data(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
  Tensor t = Tensor::zeros(3, 2, true);
  CHECK(t.grad().size() == t.data().size());
  CHECK(t.size() == 6);
}
