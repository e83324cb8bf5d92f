#include "oci/selfcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "oci/autodiff.hpp"
#include "oci/errors.hpp"
#include "oci/frm.hpp"
#include "oci/rng.hpp"
#include "oci/tensor.hpp"

namespace oci::selfcheck {

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Central differences straddle the ReLU kink when an input sits within eps
// of zero, so inputs feeding ReLU directly are pushed away from it.
Tensor rand_tensor_off_kink(std::vector<int> shape, Rng& rng, double margin = 0.05) {
  Tensor t = rand_tensor(std::move(shape), rng);
  for (double& v : t.data) v += (v >= 0.0 ? margin : -margin);
  return t;
}

/// Reduce an arbitrary-shape node to a scalar objective whose gradient is
/// dense and non-constant: sum over a fixed random elementwise weighting.
Tape::Id weighted_reduce(Tape& t, Tape::Id x, std::uint64_t wseed) {
  Rng rng(mix_seed(wseed, "reduce_weights"));
  Tensor w = rand_tensor(t.value(x).shape, rng, 0.25, 1.75);
  return t.sum(t.mul(x, t.leaf(std::move(w))));
}

struct GradCase {
  std::string name;
  std::function<double(std::uint64_t)> run;  // one seeded rep -> max rel err
};

double composed_case(std::uint64_t s) {
  frm::FrmConfig fc;
  fc.d = 8;
  fc.d_prime = 8;
  fc.n_heads = 2;
  fc.rates = {1, 2};
  fc.conv_kernel = 3;
  frm::FrmParams fp;
  fp.init(fc, mix_seed(s, "composed.frm"));

  Rng rng(mix_seed(s, "composed.data"));
  const Tensor e_in = rand_tensor({2, fc.d}, rng);
  Param memory{"memory", rand_tensor({4, fc.d_prime}, rng)};
  Param head_w{"head_w", rand_tensor({2 * fc.d_prime, 6}, rng, -0.4, 0.4)};
  Param head_b{"head_b", rand_tensor({1, 6}, rng, -0.1, 0.1)};
  const int target = static_cast<int>(s % 6);

  std::vector<Param*> ps = fp.all();
  ps.push_back(&memory);
  ps.push_back(&head_w);
  ps.push_back(&head_b);

  auto f = [&](bool g) {
    Tape t;
    Tape::Id e = t.leaf(e_in);
    Tape::Id m = t.param(memory);
    Tape::Id e_prime = frm::ln_mlp(t, e, fp, fc);
    frm::FrmOut fo = frm::frm_forward(t, e_prime, m, fp, fc);
    std::array<Tape::Id, 2> pooled_parts{t.mean_rows(fo.out), t.mean_rows(m)};
    Tape::Id pooled = t.concat_cols(pooled_parts);
    Tape::Id logits = t.linear(pooled, t.param(head_w), t.param(head_b));
    Tape::Id loss = t.cross_entropy_logits(logits, target);
    double v = t.value(loss).data[0];
    if (g) t.backward(loss);
    return v;
  };
  return grad_check(f, ps, kGradCheckEps);
}

}  // namespace

std::string SuiteResult::summary() const {
  char buf[192];
  if (max_err > 0.0) {
    std::snprintf(buf, sizeof buf, "[%s] %s: %d cases, %d failures, max_err=%.3g",
                  ok ? "PASS" : "FAIL", name.c_str(), cases, failures, max_err);
  } else {
    std::snprintf(buf, sizeof buf, "[%s] %s: %d cases, %d failures",
                  ok ? "PASS" : "FAIL", name.c_str(), cases, failures);
  }
  std::string line = buf;
  if (!ok && !detail.empty()) {
    line += " - ";
    line += detail;
  }
  return line;
}

SuiteResult run_grad_suite(std::uint64_t seed) {
  std::vector<GradCase> cases;
  auto add = [&](std::string name, std::function<double(std::uint64_t)> fn) {
    cases.push_back({std::move(name), std::move(fn)});
  };

  // Binary elementwise ops share one driver.
  auto binary = [](Tape::Id (Tape::*op)(Tape::Id, Tape::Id)) {
    return [op](std::uint64_t s) {
      Rng rng(s);
      Param a{"a", rand_tensor({3, 4}, rng)};
      Param b{"b", rand_tensor({3, 4}, rng)};
      std::array<Param*, 2> ps{&a, &b};
      auto f = [&](bool g) {
        Tape t;
        Tape::Id loss = weighted_reduce(t, (t.*op)(t.param(a), t.param(b)), s);
        double v = t.value(loss).data[0];
        if (g) t.backward(loss);
        return v;
      };
      return grad_check(f, ps, kGradCheckEps);
    };
  };
  add("add", binary(&Tape::add));
  add("sub", binary(&Tape::sub));
  add("mul", binary(&Tape::mul));

  add("scale", [](std::uint64_t s) {
    Rng rng(s);
    Param a{"a", rand_tensor({3, 4}, rng)};
    const double factor = rng.uniform(0.5, 2.0) * (rng.uniform_int(2) == 0 ? 1.0 : -1.0);
    std::array<Param*, 1> ps{&a};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.scale(t.param(a), factor), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("matmul", [](std::uint64_t s) {
    Rng rng(s);
    Param a{"a", rand_tensor({3, 5}, rng)};
    Param b{"b", rand_tensor({5, 4}, rng)};
    std::array<Param*, 2> ps{&a, &b};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.matmul(t.param(a), t.param(b)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("matmul_nt", [](std::uint64_t s) {
    Rng rng(s);
    Param a{"a", rand_tensor({3, 5}, rng)};
    Param b{"b", rand_tensor({4, 5}, rng)};
    std::array<Param*, 2> ps{&a, &b};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.matmul_nt(t.param(a), t.param(b)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("add_row", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({3, 4}, rng)};
    Param bias{"bias", rand_tensor({1, 4}, rng)};
    std::array<Param*, 2> ps{&x, &bias};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.add_row(t.param(x), t.param(bias)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("linear", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({3, 5}, rng)};
    Param w{"w", rand_tensor({5, 4}, rng)};
    Param bias{"bias", rand_tensor({1, 4}, rng)};
    std::array<Param*, 3> ps{&x, &w, &bias};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.linear(t.param(x), t.param(w), t.param(bias)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("relu", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor_off_kink({3, 4}, rng)};
    std::array<Param*, 1> ps{&x};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.relu(t.param(x)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("layer_norm", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({3, 5}, rng)};
    Param gain{"gain", rand_tensor({1, 5}, rng, 0.5, 1.5)};
    Param bias{"bias", rand_tensor({1, 5}, rng)};
    std::array<Param*, 3> ps{&x, &gain, &bias};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss =
          weighted_reduce(t, t.layer_norm(t.param(x), t.param(gain), t.param(bias)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("softmax_rows", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({2, 5}, rng, -2.0, 2.0)};
    std::array<Param*, 1> ps{&x};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.softmax_rows(t.param(x)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("depthwise_conv1d", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({6, 3}, rng)};
    Param k{"k", rand_tensor({3, 3}, rng)};
    std::array<Param*, 2> ps{&x, &k};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.depthwise_conv1d(t.param(x), t.param(k)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("window_stack", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({5, 3}, rng)};
    std::array<Param*, 1> ps{&x};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.window_stack(t.param(x), 2), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("concat_rows", [](std::uint64_t s) {
    Rng rng(s);
    Param a{"a", rand_tensor({2, 3}, rng)};
    Param b{"b", rand_tensor({3, 3}, rng)};
    std::array<Param*, 2> ps{&a, &b};
    auto f = [&](bool g) {
      Tape t;
      std::array<Tape::Id, 2> parts{t.param(a), t.param(b)};
      Tape::Id loss = weighted_reduce(t, t.concat_rows(parts), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("concat_cols", [](std::uint64_t s) {
    Rng rng(s);
    Param a{"a", rand_tensor({3, 2}, rng)};
    Param b{"b", rand_tensor({3, 3}, rng)};
    std::array<Param*, 2> ps{&a, &b};
    auto f = [&](bool g) {
      Tape t;
      std::array<Tape::Id, 2> parts{t.param(a), t.param(b)};
      Tape::Id loss = weighted_reduce(t, t.concat_cols(parts), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("mean_rows", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({4, 3}, rng)};
    std::array<Param*, 1> ps{&x};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.mean_rows(t.param(x)), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("sum", [](std::uint64_t s) {
    Rng rng(s);
    Param x{"x", rand_tensor({3, 4}, rng)};
    std::array<Param*, 1> ps{&x};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = t.sum(t.param(x));
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("rows_select", [](std::uint64_t s) {
    Rng rng(s);
    Param table{"table", rand_tensor({5, 3}, rng)};
    // Repeated indices exercise the scatter-add in the backward pass.
    std::vector<int> rows{0, 2, 2, 4, 1};
    std::array<Param*, 1> ps{&table};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = weighted_reduce(t, t.rows_select(t.param(table), rows), s);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("cross_entropy_logits", [](std::uint64_t s) {
    Rng rng(s);
    Param logits{"logits", rand_tensor({1, 6}, rng, -2.0, 2.0)};
    const int target = static_cast<int>(s % 6);
    std::array<Param*, 1> ps{&logits};
    auto f = [&](bool g) {
      Tape t;
      Tape::Id loss = t.cross_entropy_logits(t.param(logits), target);
      double v = t.value(loss).data[0];
      if (g) t.backward(loss);
      return v;
    };
    return grad_check(f, ps, kGradCheckEps);
  });

  add("composed_attention_policy", composed_case);

  SuiteResult r;
  r.name = "gradcheck";
  const int reps = 10;
  std::string worst_op;
  for (const GradCase& c : cases) {
    for (int rep = 0; rep < reps; ++rep) {
      const double err = c.run(mix_seed(mix_seed(seed, c.name), "rep", rep));
      ++r.cases;
      if (err > r.max_err) {
        r.max_err = err;
        worst_op = c.name;
      }
      if (!(err < kGradCheckTol)) {
        ++r.failures;
        if (r.detail.empty()) {
          char buf[128];
          std::snprintf(buf, sizeof buf, "%s rep %d err=%.3g", c.name.c_str(), rep, err);
          r.detail = buf;
        }
      }
    }
  }
  if (r.detail.empty() && !worst_op.empty()) r.detail = "worst op: " + worst_op;
  r.ok = r.failures == 0;
  return r;
}

namespace {

BBox random_box(Rng& rng, int image_w, int image_h) {
  const int x0 = rng.uniform_int(image_w - 1);
  const int y0 = rng.uniform_int(image_h - 1);
  const int x1 = x0 + 1 + rng.uniform_int(image_w - x0 - 1);
  const int y1 = y0 + 1 + rng.uniform_int(image_h - y0 - 1);
  return geometry::normalize_bbox(x0, y0, x1, y1, image_w, image_h);
}

}  // namespace

RoundtripCase random_roundtrip_case(std::uint64_t seed) {
  static const std::vector<std::string> kNouns = {
      "polar bear", "cube",       "box",   "toy",   "lid",    "mug",
      "bottle",     "plate",      "teddy bear", "ball",  "block",  "tray",
  };
  static const std::vector<std::string> kKinds = {"cube", "box", "toy", "lid"};
  static const std::vector<std::string> kColors = {"",     "red",    "green", "blue",
                                                   "yellow", "white", "black"};

  Rng rng(mix_seed(seed, "roundtrip_case"));
  for (int attempt = 0; attempt < 100; ++attempt) {
    RoundtripCase c;
    c.scene.image_width = 64 + rng.uniform_int(449);
    c.scene.image_height = 64 + rng.uniform_int(449);
    c.scene.robot_ref = random_box(rng, c.scene.image_width, c.scene.image_height);

    const int n_obj = 1 + rng.uniform_int(4);
    std::vector<std::string> pool = kNouns;
    rng.shuffle(pool);
    for (int i = 0; i < n_obj; ++i) {
      geometry::SceneObject o;
      o.name = pool[static_cast<std::size_t>(i)];
      o.kind = kKinds[static_cast<std::size_t>(rng.uniform_int(4))];
      o.color = kColors[static_cast<std::size_t>(rng.uniform_int(7))];
      o.bbox = random_box(rng, c.scene.image_width, c.scene.image_height);
      c.scene.objects.push_back(std::move(o));
    }

    const int target = rng.uniform_int(n_obj);
    const bool has_dest = n_obj >= 2 && rng.uniform_int(2) == 0;
    c.task.target_name = c.scene.objects[static_cast<std::size_t>(target)].name;
    if (has_dest) {
      int dest = rng.uniform_int(n_obj - 1);
      if (dest >= target) ++dest;
      c.task.destination_name = c.scene.objects[static_cast<std::size_t>(dest)].name;
    }
    const std::vector<std::string>& bank = augmenter::paraphrase_bank(has_dest);
    c.task.verb_template = bank[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(bank.size())))];

    c.render.ablate_abs = rng.uniform_int(4) == 0;
    c.render.ablate_rel = rng.uniform_int(4) == 0;
    c.render.canonical = rng.uniform_int(4) != 0;
    c.render.decimals = rng.uniform_int(4) == 0 ? 1 + rng.uniform_int(5) : 3;

    try {
      (void)augmenter::augment(c.scene, c.task, c.render);
      return c;
    } catch (const Error&) {
      continue;  // e.g. an object center tied with the robot center
    }
  }
  throw ValidationError("random_roundtrip_case: could not build a usable case");
}

SuiteResult run_roundtrip_suite(int cases, std::uint64_t seed) {
  SuiteResult r;
  r.name = "roundtrip";
  for (int i = 0; i < cases; ++i) {
    ++r.cases;
    const RoundtripCase c = random_roundtrip_case(mix_seed(seed, "rt", i));
    try {
      const augmenter::AugmentResult aug = augmenter::augment(c.scene, c.task, c.render);
      const augmenter::AugmentedInstruction parsed = augmenter::parse_augmented(aug.text);
      if (!(parsed == aug.structured)) {
        ++r.failures;
        if (r.detail.empty()) r.detail = "case " + std::to_string(i) + ": \"" + aug.text + "\"";
      }
    } catch (const Error& e) {
      ++r.failures;
      if (r.detail.empty()) r.detail = "case " + std::to_string(i) + " threw: " + e.what();
    }
  }
  r.ok = r.failures == 0;
  return r;
}

geometry::Direction direction_oracle_atan2(double dx, double dy,
                                           const geometry::SectorConfig& cfg) {
  cfg.validate();
  if (std::abs(dx) <= cfg.tie_epsilon && std::abs(dy) <= cfg.tie_epsilon) {
    throw ValidationError("direction_oracle_atan2: offset is ambiguous (zero within epsilon)");
  }
  using geometry::Direction;
  const double h = cfg.cardinal_half_angle_deg;
  const double theta = std::atan2(dy, dx) * (180.0 / std::numbers::pi);
  // Sectors on the atan2 angle with image y pointing down; each sector is
  // half-open, closed at its lower angle, and Left owns the 180-degree ray.
  struct Band {
    double lo, hi;
    Direction dir;
  };
  const Band bands[] = {
      {-181.0, -(180.0 - h), Direction::Left},
      {-(180.0 - h), -(90.0 + h), Direction::UpperLeft},
      {-(90.0 + h), -(90.0 - h), Direction::Top},
      {-(90.0 - h), -h, Direction::UpperRight},
      {-h, h, Direction::Right},
      {h, 90.0 - h, Direction::BottomRight},
      {90.0 - h, 90.0 + h, Direction::Bottom},
      {90.0 + h, 180.0 - h, Direction::BottomLeft},
  };
  for (const Band& b : bands) {
    if (theta >= b.lo && theta < b.hi) return b.dir;
  }
  return Direction::Left;  // [180 - h, 180]
}

namespace {

/// True when the offset angle is so close to a sector boundary that the
/// classifier (exact rational comparisons) and the oracle (atan2 floating
/// point) could legitimately disagree.
bool near_sector_boundary(double dx, double dy, const geometry::SectorConfig& cfg) {
  if (std::hypot(dx, dy) < 1e-6) return true;  // too close to ambiguous
  const double h = cfg.cardinal_half_angle_deg;
  const double a = std::abs(std::atan2(dy, dx) * (180.0 / std::numbers::pi));
  const double boundaries[] = {h, 90.0 - h, 90.0 + h, 180.0 - h};
  for (double b : boundaries) {
    if (std::abs(a - b) < 1e-9) return true;
  }
  return false;
}

}  // namespace

SuiteResult run_direction_suite(int random_cases, std::uint64_t seed) {
  SuiteResult r;
  r.name = "direction";
  const geometry::SectorConfig cfg;

  auto check = [&](double dx, double dy) {
    ++r.cases;
    const geometry::Direction got = geometry::classify_offset(dx, dy, cfg);
    const geometry::Direction want = direction_oracle_atan2(dx, dy, cfg);
    if (got != want) {
      ++r.failures;
      if (r.detail.empty()) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "dx=%.17g dy=%.17g: classifier=%s oracle=%s", dx, dy,
                      geometry::direction_name(got).c_str(),
                      geometry::direction_name(want).c_str());
        r.detail = buf;
      }
    }
  };

  Rng rng(mix_seed(seed, "direction_suite"));
  for (int i = 0; i < random_cases; ++i) {
    double dx = 0.0, dy = 0.0;
    do {
      dx = rng.uniform(-2.0, 2.0);
      dy = rng.uniform(-2.0, 2.0);
    } while (near_sector_boundary(dx, dy, cfg));
    check(dx, dy);
  }

  // Dense sweep; the half-step phase keeps every angle off the 22.5-degree
  // boundary multiples.
  for (int k = 0; k < 3600; ++k) {
    const double rad = (static_cast<double>(k) + 0.5) * 0.1 * std::numbers::pi / 180.0;
    check(0.7 * std::cos(rad), 0.7 * std::sin(rad));
  }

  // The worked example: the toy under the arm must come out as "bottom".
  {
    ++r.cases;
    const BBox obj{0.396, 0.682, 0.516, 0.786};
    const BBox robot{0.052, 0.0, 0.552, 0.342};
    if (geometry::classify_direction(obj, robot, cfg) != geometry::Direction::Bottom) {
      ++r.failures;
      if (r.detail.empty()) r.detail = "worked example did not classify as Bottom";
    }
  }

  r.ok = r.failures == 0;
  return r;
}

std::vector<SuiteResult> run_all() {
  return {run_grad_suite(), run_roundtrip_suite(), run_direction_suite()};
}

}  // namespace oci::selfcheck
