// Acceptance gate. Runs every primary criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion; exits non-zero if any fails.

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "lpmm/lpmm.hpp"
#include "support/live_server.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace lpmm;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- shared data --------------------------------------------------------

const std::vector<double> kPcaVariances{1.0, 0.5, 0.25, 0.1, 0.05};

const synth::LinearFaceModel& pca_generator() {
  static const auto gen = synth::linear_face_model(kPcaVariances, 11);
  return gen;
}

synth::LinearFaceModel reference_generator() {
  std::vector<double> var;
  for (int i = 0; i < 8; ++i) var.push_back(1e-3 * std::pow(0.6, i));
  return synth::linear_face_model(var, 101);
}

template <class F>
std::optional<ErrorCode> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  } catch (const std::exception&) {
    return ErrorCode::io_error;
  }
  return std::nullopt;
}

// ---- criteria -----------------------------------------------------------

Outcome pca_correctness() {
  const auto& gen = pca_generator();
  const auto ds = synth::sample_dataset(gen, 500, 12);
  const auto model = build_lpmm(ds);
  const Eigen::MatrixXd& U = gen.directions;
  const Eigen::MatrixXd est = model.basis().leftCols(5);
  const Eigen::MatrixXd residual = est - U * (U.transpose() * est);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
  double max_angle = 0.0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    max_angle = std::max(max_angle, std::asin(std::min(1.0, svd.singularValues()[i])));
  const double ev = explained_variance(model, 5);
  return {max_angle < 1e-4 && std::abs(ev - 1.0) <= 1e-9,
          fmt("max principal angle %.3e rad, explained_variance(5) - 1 = %.3e, m = %d", max_angle, ev - 1.0,
              model.m())};
}

Outcome k_sweep_shape() {
  const auto ds = synth::sample_dataset(pca_generator(), 500, 12, 0.002);
  const auto model = build_lpmm(ds);
  std::vector<int> ks{1, 2, 3, 5, 10, std::min(136, model.m())};
  const auto reports = nme_sweep(model, ds, ks);
  bool monotone = true;
  std::string curve;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i > 0 && reports[i].mean > reports[i - 1].mean) monotone = false;
    curve += fmt("%sk=%d:%.4g", i ? " " : "", *reports[i].k, reports[i].mean);
  }
  const double nme5 = reports[3].mean;
  const double nme_m = reports.back().mean;
  const bool ratio_ok = nme5 <= 1.05 * nme_m;
  return {monotone && ratio_ok,
          fmt("non-increasing=%s, NME(5)=%.4g vs 1.05*NME(m=%d)=%.4g [%s]", monotone ? "yes" : "no", nme5,
              model.m(), 1.05 * nme_m, curve.c_str())};
}

Outcome eq1_round_trip() {
  const auto ds = synth::sample_dataset(pca_generator(), 500, 12, 0.002);
  const auto model = build_lpmm(ds);
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> pick_k(1, model.m());
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int k = pick_k(rng);
    Eigen::VectorXd p(k);
    for (int j = 0; j < k; ++j) p[j] = synth::random_vector(1, rng, std::sqrt(model.eigenvalues()[j]) + 1e-3)[0];
    const ParamVector pv(p);
    const auto back = fit_params(model, reconstruct(model, pv), k);
    worst = std::max(worst, (back.values() - p).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-10, fmt("max |fit(reconstruct(p)) - p| = %.3e over 1000 vectors", worst)};
}

Outcome nme_metric() {
  // Hand case: outer eye corners 0.1 apart, every point shifted by 0.01.
  std::vector<std::pair<double, double>> pts;
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  for (int i = 0; i < 68; ++i) pts.emplace_back(u(rng), u(rng));
  pts[kLeftOuterEye] = {0.45, 0.40};
  pts[kRightOuterEye] = {0.55, 0.40};
  const auto truth = LandmarkSet::from_points(pts);
  for (auto& p : pts) p.first += 0.01;
  const auto pred = LandmarkSet::from_points(pts);
  const double hand = nme(pred, truth);
  const bool hand_ok = std::abs(hand - 0.1) <= 1e-12;

  double worst = 0.0;
  const auto faces = synth::sample_faces(pca_generator(), 200, 15, 0.01);
  std::uniform_real_distribution<double> scale(0.05, 20.0), shift(-5.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const auto& a = faces[2 * i];
    const auto& b = faces[2 * i + 1];
    const double s = scale(rng);
    Eigen::VectorXd t(a.flat().size());
    const double tx = shift(rng), ty = shift(rng);
    for (Eigen::Index d = 0; d < t.size(); d += 2) {
      t[d] = tx;
      t[d + 1] = ty;
    }
    const double base = nme(a, b);
    const double moved = nme(LandmarkSet(s * a.flat() + t), LandmarkSet(s * b.flat() + t));
    worst = std::max(worst, std::abs(moved - base) / base);
  }
  return {hand_ok && worst < 1e-9,
          fmt("hand case NME = %.15f (|err| %.1e), max relative change under similarity over 100 pairs %.2e", hand,
              std::abs(hand - 0.1), worst)};
}

Outcome gradient_suite() {
  const auto gen = synth::linear_face_model({4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4, 1e-4}, 16);
  const auto ds = synth::sample_dataset(gen, 60, 17);
  const auto model = build_lpmm(ds);
  std::mt19937_64 rng(18);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  double worst = 0.0;
  int checked = 0, excluded = 0;
  for (int c = 0; c < 50; ++c) {
    const int k = uni(1, 5);
    const int w = uni(1, 6);
    const RasterConfig raster{uni(8, 16), uni(8, 16), real(0.03, 0.12)};
    const auto stack = make_surrogate(rng(), w, model.mean_landmarks(), raster);
    TrainConfig cfg;
    cfg.k = k;
    cfg.loss_variant = uni(0, 1) ? LossVariant::rgb : LossVariant::latent;
    cfg.pose_reg_enabled = uni(0, 1) == 1;
    cfg.lambda_rgb = real(0.2, 2.0);
    cfg.lambda_pose_reg = real(0.2, 2.0);
    auto net = init_adaptor(k, w, LatentVector(synth::random_vector(w, rng, 0.05)), rng());
    net.mutable_params().for_each([&](double& v) { v += real(-0.05, 0.05); });
    std::vector<LandmarkSet> batch;
    const int size = uni(1, 4);
    for (int i = 0; i < size; ++i) batch.push_back(ds.landmarks(static_cast<std::size_t>(uni(0, 59))));
    const auto r = synth::check_gradients(net, stack, model, batch, cfg);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    excluded += r.excluded;
  }
  return {worst < 1e-4 && checked > 0,
          fmt("max relative error %.3e over %d coordinates (%d excluded at l1 kinks), 50 configs", worst, checked,
              excluded)};
}

struct ReferenceRun {
  TrainingReport report;
  double seconds = 0.0;
};

struct ReferenceSetup {
  LandmarkDataset data;
  LpmmModel model;
  SurrogateStack stack;
};

const ReferenceSetup& reference_setup() {
  static const ReferenceSetup s = [] {
    auto data = synth::sample_dataset(reference_generator(), 500, 102);
    auto model = build_lpmm(data);
    auto stack = make_surrogate(103, 16, model.mean_landmarks(), RasterConfig{64, 64, 0.02});
    return ReferenceSetup{std::move(data), std::move(model), std::move(stack)};
  }();
  return s;
}

TrainConfig reference_config(LossVariant variant, bool pose_reg) {
  TrainConfig cfg;
  cfg.k = 8;
  cfg.steps = 2000;
  cfg.learning_rate = 1e-4;
  cfg.lambda_rgb = 1.0;
  cfg.lambda_pose_reg = 1.0;
  cfg.seed = 104;
  cfg.loss_variant = variant;
  cfg.pose_reg_enabled = pose_reg;
  return cfg;
}

ReferenceRun run_reference(LossVariant variant, bool pose_reg) {
  const auto& s = reference_setup();
  const auto t0 = std::chrono::steady_clock::now();
  auto [net, report] = train_adaptor(s.model, s.stack, s.data, reference_config(variant, pose_reg));
  return {std::move(report), seconds_since(t0)};
}

std::optional<ReferenceRun> g_reference;

Outcome adaptor_convergence() {
  auto first = run_reference(LossVariant::rgb, true);
  const auto second = run_reference(LossVariant::rgb, true);
  bool identical = first.report.loss_curve.size() == second.report.loss_curve.size();
  for (std::size_t i = 0; identical && i < first.report.loss_curve.size(); ++i) {
    const auto& a = first.report.loss_curve[i];
    const auto& b = second.report.loss_curve[i];
    identical = std::memcmp(&a.rgb, &b.rgb, sizeof(double)) == 0 &&
                std::memcmp(&a.pose_reg, &b.pose_reg, sizeof(double)) == 0 &&
                std::memcmp(&a.total, &b.total, sizeof(double)) == 0;
  }
  const auto& r = first.report;
  const double ratio = r.final.rgb / r.initial.rgb;
  const double per_run = std::max(first.seconds, second.seconds);
  g_reference = std::move(first);
  return {ratio < 0.05 && r.final_pose_residual < 0.01 && identical && per_run < 600.0,
          fmt("rgb final/initial = %.4f, |d(p_bar)|_1/w = %.3e, reruns bit-identical = %s, %.1f s per run", ratio,
              r.final_pose_residual, identical ? "yes" : "no", per_run)};
}

Outcome ablation() {
  struct Row {
    const char* variant;
    bool reg;
    ReferenceRun run;
  };
  std::vector<Row> rows;
  for (auto variant : {LossVariant::rgb, LossVariant::latent})
    for (bool reg : {true, false}) {
      const bool reuse = variant == LossVariant::rgb && reg && g_reference;
      rows.push_back({variant == LossVariant::rgb ? "rgb" : "latent", reg,
                      reuse ? *g_reference : run_reference(variant, reg)});
    }
  std::printf("  %-7s %-8s %12s %12s %12s %14s %8s\n", "loss", "pose_reg", "initial rgb", "final rgb", "final/init",
              "|d(p_bar)|_1/w", "seconds");
  bool ok = true;
  for (const auto& row : rows) {
    const auto& r = row.run.report;
    const bool completed = r.steps_completed == r.config.steps && !r.cancelled;
    ok = ok && completed && std::isfinite(r.final.total);
    if (row.reg) ok = ok && r.final_pose_residual < 0.01;
    std::printf("  %-7s %-8s %12.5g %12.5g %12.4f %14.3e %8.1f\n", row.variant, row.reg ? "on" : "off",
                r.initial.rgb, r.final.rgb, r.final.rgb / r.initial.rgb, r.final_pose_residual, row.run.seconds);
  }
  return {ok, "4 configurations completed; pose_reg-on runs checked against the 0.01 bound"};
}

Outcome base_pose() {
  const auto& s = reference_setup();
  const auto mean = reconstruct(s.model, ParamVector::zeros(s.model.m()));
  bool exact = mean.flat() == s.model.mean();
  for (int k = 1; k <= s.model.m() && exact; k += 7) exact = reconstruct(s.model, ParamVector::zeros(k)).flat() == s.model.mean();

  std::mt19937_64 rng(19);
  const auto v_bar = LatentVector(synth::random_vector(16, rng));
  const auto zero = AdaptorNet::zeros(8, 16, v_bar.values());
  bool fixed = true;
  for (int i = 0; i < 200 && fixed; ++i) {
    const ParamVector p(synth::random_vector(8, rng, i < 100 ? 0.1 : 100.0));
    fixed = adaptor_forward(zero, p).values() == v_bar.values();
  }
  return {exact && fixed, fmt("reconstruct(zeros) == mean bitwise: %s; zero-weight adaptor returns v_bar for 200 "
                              "random p: %s",
                              exact ? "yes" : "no", fixed ? "yes" : "no")};
}

Outcome formats() {
  const auto& s = reference_setup();
  const auto& model = s.model;
  std::vector<std::string> failures;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };
  auto expect_code = [&](std::optional<ErrorCode> got, ErrorCode want, const std::string& what) {
    if (got != want) failures.push_back(what + " -> " + (got ? std::string(code_name(*got)) : "accepted"));
  };

  // Model.
  const json mj = model_to_json(model);
  const auto model_back = deserialize_model(serialize_model(model));
  expect(model_back == model && model_to_json(model_back) == mj, "model round trip");
  {
    json t = mj;
    t["version"] = kModelFormatVersion + 1;
    expect_code(code_of([&] { model_from_json(t); }), ErrorCode::version_mismatch, "model version");
    t = mj;
    t["format"] = "lpmm-adaptor";
    expect_code(code_of([&] { model_from_json(t); }), ErrorCode::format_mismatch, "model format");
    t = mj;
    t["basis"][0][0] = t["basis"][0][0].get<double>() + 1e-3;
    expect_code(code_of([&] { model_from_json(t); }), ErrorCode::basis_not_orthonormal, "model basis");
    t = mj;
    t["mean"].erase(0);
    expect_code(code_of([&] { model_from_json(t); }), ErrorCode::dimension_mismatch, "model mean length");
    const std::string text = serialize_model(model);
    expect_code(code_of([&] { deserialize_model(text.substr(0, text.size() / 2)); }), ErrorCode::malformed_input,
                "model truncated");
  }

  // Blendshape.
  const Blendshape b{"surprise", ParamVector(Eigen::VectorXd::LinSpaced(8, -0.01, 0.02)), "eyebrows up"};
  const json bj = blendshape_to_json(b, model.fingerprint());
  const auto b_back = blendshape_from_json(json::parse(bj.dump()), model.fingerprint());
  expect(b_back.name == b.name && b_back.offset == b.offset && b_back.description == b.description &&
             blendshape_to_json(b_back, model.fingerprint()) == bj,
         "blendshape round trip");
  {
    json t = bj;
    t["model_fingerprint"] = "ffffffffffffffff";
    expect_code(code_of([&] { blendshape_from_json(t, model.fingerprint()); }), ErrorCode::fingerprint_mismatch,
                "blendshape fingerprint");
    t = bj;
    t["version"] = kBlendshapeFormatVersion + 1;
    expect_code(code_of([&] { blendshape_from_json(t, model.fingerprint()); }), ErrorCode::version_mismatch,
                "blendshape version");
    t = bj;
    t["offset"][2] = "x";
    expect_code(code_of([&] { blendshape_from_json(t, model.fingerprint()); }), ErrorCode::malformed_input,
                "blendshape offset type");
  }

  // Adaptor.
  std::mt19937_64 rng(20);
  auto net = init_adaptor(8, 16, LatentVector(synth::random_vector(16, rng)), 21);
  const auto cfg = reference_config(LossVariant::latent, false);
  const json aj = adaptor_to_json(net, cfg, s.stack.seed(), model.fingerprint(), s.stack.raster());
  const auto a_back = adaptor_from_json(json::parse(aj.dump()), model.fingerprint());
  expect(a_back.net.params() == net.params() && a_back.net.mean_latent() == net.mean_latent() &&
             adaptor_to_json(a_back.net, a_back.config, a_back.surrogate_seed, a_back.model_fingerprint,
                             a_back.raster) == aj,
         "adaptor round trip");
  {
    json t = aj;
    t["model_fingerprint"] = "0123456789abcdef";
    expect_code(code_of([&] { adaptor_from_json(t, model.fingerprint()); }), ErrorCode::fingerprint_mismatch,
                "adaptor fingerprint");
    t = aj;
    t["version"] = kAdaptorFormatVersion + 1;
    expect_code(code_of([&] { adaptor_from_json(t, model.fingerprint()); }), ErrorCode::version_mismatch,
                "adaptor version");
    t = aj;
    t["format"] = "lpmm-model";
    expect_code(code_of([&] { adaptor_from_json(t, model.fingerprint()); }), ErrorCode::format_mismatch,
                "adaptor format");
    t = aj;
    t["biases"][1].erase(0);
    expect_code(code_of([&] { adaptor_from_json(t, model.fingerprint()); }), ErrorCode::dimension_mismatch,
                "adaptor layer shape");
  }

  std::string detail = failures.empty() ? "model, blendshape and adaptor files round-trip; 12 tamperings rejected"
                                        : "problems:";
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty(), detail};
}

Outcome service_contract() {
  const auto gen = synth::linear_face_model({4e-3, 2e-3, 1e-3}, 22);
  const auto ds = synth::sample_dataset(gen, 40, 23);
  const auto model = build_lpmm(ds);
  synth::LiveServer s(synth::fresh_temp_dir("acceptance"));

  const auto empty = s.get("/model");
  const bool no_model = empty.status == 404 && empty.body["error"]["code"] == "no_model";

  const auto built = s.post("/model/build", {{"dataset", synth::records_json(ds)}});
  const auto rec = s.post("/reconstruct", {{"params", json(std::vector<double>(model.m(), 0.0))}});
  const bool base = built.status == 200 && rec.status == 200 &&
                    detail::points_from_json(rec.body["points"]).flat() == model.mean();

  s.post("/surrogate", {{"seed", 1}, {"w", 4}, {"raster", {{"h", 16}, {"w", 16}, {"sigma", 0.05}}}});
  const json job = {{"config", {{"k", 3}, {"steps", 1000000}, {"batch_size", 4}}}};
  const auto first = s.post("/adaptor/train", job);
  const auto second = s.post("/adaptor/train", job);
  const bool busy = first.status == 202 && second.status == 409 && second.body["error"]["code"] == "job_running";

  return {no_model && base && busy,
          fmt("GET /model empty -> %d %s; reconstruct(zeros) == mean: %s; second train -> %d %s", empty.status,
              empty.body["error"]["code"].dump().c_str(), base ? "yes" : "no", second.status,
              second.body.contains("error") ? second.body["error"]["code"].dump().c_str() : "-")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"pca-correctness", 5.0, pca_correctness},
      {"k-sweep-shape", 10.0, k_sweep_shape},
      {"param-round-trip", 0.0, eq1_round_trip},
      {"nme-metric", 0.0, nme_metric},
      {"gradient-suite", 60.0, gradient_suite},
      {"adaptor-convergence", 0.0, adaptor_convergence},  // per-run bound checked inside
      {"ablation-harness", 0.0, ablation},
      {"base-pose", 0.0, base_pose},
      {"file-formats", 0.0, formats},
      {"service-contract", 0.0, service_contract},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (c.budget_seconds > 0.0 && secs >= c.budget_seconds) {
      o.pass = false;
      o.detail += fmt(" (over %.0f s budget)", c.budget_seconds);
    }
    if (!o.pass) ++failed;
    std::printf("%s %-20s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
