// Command-line front end: model building, fitting, editing, adaptor training,
// evaluation and the HTTP service.

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lpmm/lpmm.hpp"
#include "lpmm/service.hpp"

namespace {

using lpmm::Error;
using lpmm::ErrorCode;
using nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitDomain = 3;

lpmm::LpmmModel load_model(const std::string& path) {
  return lpmm::deserialize_model(lpmm::io::read_file(path));
}

lpmm::LandmarkDataset load_dataset(const std::string& path) {
  return lpmm::to_canonical(lpmm::parse_landmark_records(lpmm::io::read_file(path)));
}

// Accepts "0.1,-0.2,0.3" or a path to a JSON array / {"params": [...]} file.
lpmm::ParamVector parse_params(const std::string& spec) {
  if (spec.empty()) throw Error(ErrorCode::malformed_input, "empty parameter list");
  if (spec.find_first_not_of("0123456789+-.,eE ") == std::string::npos) {
    std::vector<double> values;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(item, &used));
        if (item.find_first_not_of(' ', used) != std::string::npos) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw Error(ErrorCode::malformed_input, "bad parameter value \"" + item + "\"");
      }
    }
    return lpmm::ParamVector(Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  const json j = lpmm::io::parse_json(lpmm::io::read_file(spec));
  return lpmm::ParamVector(
      lpmm::io::vector_from_json(j.is_object() ? lpmm::io::require(j, "params") : j, "params"));
}

std::vector<int> parse_ks(const std::string& spec) {
  std::vector<int> ks;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      ks.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::malformed_input, "bad degree \"" + item + "\"");
    }
  }
  return ks;
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump() << "\n";
  } else {
    lpmm::io::write_file(out, j.dump());
  }
}

std::string format_params(const lpmm::ParamVector& p) {
  std::ostringstream s;
  s.precision(17);
  for (int i = 0; i < p.k(); ++i) s << (i ? "," : "") << p[i];
  return s.str();
}

struct Options {
  std::string model, dataset, out, params, report, adaptor, pgm, to, ks = "1,2,3,5,10,20,40,136";
  std::string m = "auto", host = "127.0.0.1", state_dir = "lpmm-state", loss = "rgb", save_as, description;
  std::vector<std::string> blends;
  int k = 0, w = 16, steps = 2000, batch = 32, raster = 64, port = 8080;
  std::uint64_t seed = 0;
  double lr = 1e-4, sigma = 0.02, alpha = 1.0, lambda_rgb = 1.0, lambda_pose_reg = 1.0;
  bool json_out = false, no_pose_reg = false, with_points = false;
  std::optional<double> scale;
};

int cmd_build(const Options& o) {
  const auto ds = load_dataset(o.dataset);
  std::optional<int> m;
  if (o.m != "auto") m = parse_ks(o.m).at(0);
  const auto model = lpmm::build_lpmm(ds, m);
  if (!o.out.empty()) lpmm::io::write_file(o.out, lpmm::serialize_model(model));
  if (o.json_out) {
    std::cout << json{{"n", model.n()},
                      {"m", model.m()},
                      {"samples", ds.size()},
                      {"fingerprint", model.fingerprint()},
                      {"eigenvalues", lpmm::io::to_json(model.eigenvalues())},
                      {"warnings", model.warnings()}}
                     .dump()
              << "\n";
  } else {
    std::cout << "built model from " << ds.size() << " samples: n=" << model.n() << " m=" << model.m()
              << " fingerprint=" << model.fingerprint() << "\n";
    for (const auto& w : model.warnings()) std::cout << "warning: " << w << "\n";
    for (int k : {1, 5, 10, 40})
      if (k <= model.m())
        std::cout << "  explained variance k=" << k << ": " << lpmm::explained_variance(model, k) << "\n";
  }
  return 0;
}

int cmd_fit(const Options& o) {
  const auto model = load_model(o.model);
  const auto ds = load_dataset(o.dataset);
  const int k = o.k > 0 ? o.k : model.m();
  std::string lines;
  for (const auto& r : ds.records()) {
    const auto p = lpmm::fit_params(model, r.landmarks, k);
    if (o.json_out || !o.out.empty()) {
      lines += json{{"id", r.id}, {"frame", r.frame}, {"k", k}, {"params", lpmm::io::to_json(p.values())}}.dump();
    } else {
      lines += r.id + "/" + r.frame + ": " + format_params(p);
    }
    lines += "\n";
  }
  if (o.out.empty()) std::cout << lines;
  else lpmm::io::write_file(o.out, lines);
  return 0;
}

int cmd_reconstruct(const Options& o) {
  const auto model = load_model(o.model);
  const auto p = parse_params(o.params);
  const auto l = lpmm::reconstruct(model, p);
  json out{{"k", p.k()}, {"points", lpmm::detail::points_to_json(l)}};
  if (!o.adaptor.empty()) {
    const auto file = lpmm::adaptor_from_json(lpmm::io::parse_json(lpmm::io::read_file(o.adaptor)),
                                              model.fingerprint());
    const auto stack = lpmm::make_surrogate(file.surrogate_seed, file.net.w(), model.mean_landmarks(),
                                            file.raster.value_or(lpmm::RasterConfig{}));
    const auto v = lpmm::map_params_to_latent(file.net, p);
    out["latent"] = lpmm::io::to_json(v.values());
    if (!o.pgm.empty()) lpmm::io::write_file(o.pgm, lpmm::raster_to_pgm(lpmm::render_raster(stack, v)));
  } else if (!o.pgm.empty()) {
    lpmm::io::write_file(o.pgm, lpmm::raster_to_pgm(lpmm::render_points(lpmm::RasterConfig{o.raster, o.raster, o.sigma}, l)));
  }
  emit(out, o.out);
  return 0;
}

int cmd_edit(const Options& o) {
  const auto model = load_model(o.model);
  auto p = parse_params(o.params);
  std::vector<lpmm::Blendshape> shapes;
  std::vector<double> weights;
  for (const auto& spec : o.blends) {
    const auto colon = spec.rfind(':');
    const std::string path = colon == std::string::npos ? spec : spec.substr(0, colon);
    double weight = 1.0;
    if (colon != std::string::npos) {
      try {
        weight = std::stod(spec.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::malformed_input, "bad blendshape weight in \"" + spec + "\"");
      }
    }
    shapes.push_back(lpmm::blendshape_from_json(lpmm::io::parse_json(lpmm::io::read_file(path)),
                                                model.fingerprint()));
    weights.push_back(weight);
  }
  std::vector<lpmm::WeightedBlendshape> edits;
  for (std::size_t i = 0; i < shapes.size(); ++i) edits.push_back({&shapes[i], weights[i]});
  p = lpmm::apply_blendshapes(p, edits);
  if (o.scale) p = lpmm::scale_from_base(p, *o.scale);
  if (!o.to.empty()) p = lpmm::interpolate_params(p, parse_params(o.to), o.alpha);
  lpmm::detail::check_degree(model, p.k());

  if (!o.save_as.empty()) {
    // The base pose is p = 0, so the captured offset is the edited vector itself.
    const lpmm::Blendshape b{o.save_as, p, o.description};
    if (!lpmm::BlendshapeLibrary::valid_name(b.name))
      throw Error(ErrorCode::malformed_input, "invalid blendshape name");
    const auto j = lpmm::blendshape_to_json(b, model.fingerprint());
    emit(j, o.out);
    return 0;
  }
  json out{{"k", p.k()}, {"params", lpmm::io::to_json(p.values())}};
  if (o.with_points) out["points"] = lpmm::detail::points_to_json(lpmm::reconstruct(model, p));
  if (o.json_out || !o.out.empty() || o.with_points) emit(out, o.out);
  else std::cout << format_params(p) << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const auto model = load_model(o.model);
  const auto ds = load_dataset(o.dataset);
  lpmm::TrainConfig cfg;
  cfg.k = o.k > 0 ? o.k : std::min(cfg.k, model.m());
  cfg.learning_rate = o.lr;
  cfg.lambda_rgb = o.lambda_rgb;
  cfg.lambda_pose_reg = o.lambda_pose_reg;
  cfg.batch_size = o.batch;
  cfg.steps = o.steps;
  cfg.seed = o.seed;
  cfg.pose_reg_enabled = !o.no_pose_reg;
  cfg.loss_variant = o.loss == "latent" ? lpmm::LossVariant::latent : lpmm::LossVariant::rgb;
  const lpmm::RasterConfig raster{o.raster, o.raster, o.sigma};
  const auto stack = lpmm::make_surrogate(o.seed, o.w, model.mean_landmarks(), raster);

  lpmm::TrainingHooks hooks;
  if (!o.json_out)
    hooks.on_step = [&](int step, const lpmm::LossBreakdown& l) {
      if (step % 100 == 0 || step == cfg.steps)
        std::cerr << "step " << step << "/" << cfg.steps << " rgb=" << l.rgb << " pose_reg=" << l.pose_reg
                  << " total=" << l.total << "\n";
    };
  const auto [net, report] = lpmm::train_adaptor(model, stack, ds, cfg, hooks);
  if (!o.out.empty())
    lpmm::io::write_file(o.out, lpmm::adaptor_to_json(net, cfg, stack.seed(), model.fingerprint(), raster).dump());
  const json rep = lpmm::report_to_json(report);
  if (!o.report.empty()) lpmm::io::write_file(o.report, rep.dump());
  if (o.json_out) {
    json brief = rep;
    brief.erase("loss_curve");
    std::cout << brief.dump() << "\n";
  } else {
    std::cout << "initial rgb=" << report.initial.rgb << " final rgb=" << report.final.rgb
              << " pose residual=" << report.final_pose_residual << " (" << report.wall_seconds << " s)\n";
  }
  return 0;
}

int cmd_eval(const Options& o) {
  const auto model = load_model(o.model);
  const auto ds = load_dataset(o.dataset);
  std::vector<int> ks;
  for (int k : parse_ks(o.ks)) ks.push_back(std::min(k, model.m()));
  const auto reports = lpmm::nme_sweep(model, ds, ks);
  if (o.json_out) {
    auto arr = json::array();
    for (const auto& r : reports)
      arr.push_back({{"k", *r.k}, {"mean", r.mean}, {"skipped", r.skipped}, {"per_sample", r.per_sample}});
    emit(arr, o.out);
  } else {
    for (const auto& r : reports)
      std::cout << "k=" << *r.k << " mean NME=" << r.mean << " (" << r.per_sample.size() << " samples, "
                << r.skipped << " skipped)\n";
  }
  return 0;
}

int cmd_export(const Options& o) {
  const auto model = load_model(o.model);
  const std::string text = lpmm::serialize_model(model);
  if (o.out.empty()) std::cout << text << "\n";
  else lpmm::io::write_file(o.out, text);
  return 0;
}

volatile std::sig_atomic_t g_stop = 0;

int cmd_serve(const Options& o) {
  lpmm::service::Server server({o.host, o.port, o.state_dir});
  for (const auto& e : server.session().startup_errors()) std::cerr << "state: " << e << "\n";
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  server.start();
  std::cerr << "serving on http://" << o.host << ":" << server.port() << "/api/v1\n";
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark-parameter morphable model toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) { c->add_flag("--json", o.json_out, "Machine-readable output"); };

  auto* build = app.add_subcommand("build", "Build a model from a landmark dataset");
  build->add_option("--dataset", o.dataset, "JSONL landmark dataset")->required();
  build->add_option("--m", o.m, "Component count or 'auto'");
  build->add_option("--out", o.out, "Model file to write");
  common(build);

  auto* fit = app.add_subcommand("fit", "Fit parameters to every record of a dataset");
  fit->add_option("--model", o.model)->required();
  fit->add_option("--dataset", o.dataset)->required();
  fit->add_option("--k", o.k, "Degree (default m)");
  fit->add_option("--out", o.out);
  common(fit);

  auto* rec = app.add_subcommand("reconstruct", "Landmarks (and optionally a raster) from parameters");
  rec->add_option("--model", o.model)->required();
  rec->add_option("--params", o.params, "Comma list or JSON file")->required();
  rec->add_option("--adaptor", o.adaptor, "Adaptor file; adds the latent and enables raster output");
  rec->add_option("--pgm", o.pgm, "Write the raster as ASCII PGM");
  rec->add_option("--raster", o.raster, "Raster size when no adaptor is given");
  rec->add_option("--sigma", o.sigma, "Splat width when no adaptor is given");
  rec->add_option("--out", o.out);
  common(rec);

  auto* edit = app.add_subcommand("edit", "Blendshape, scaling and interpolation edits");
  edit->add_option("--model", o.model)->required();
  edit->add_option("--params", o.params, "Base parameters")->required();
  edit->add_option("--blend", o.blends, "FILE[:WEIGHT] blendshape to apply (repeatable)");
  edit->add_option("--scale", o.scale, "Scale parameters toward the base pose");
  edit->add_option("--to", o.to, "Interpolation target parameters");
  edit->add_option("--alpha", o.alpha, "Interpolation position in [0,1]")->check(CLI::Range(0.0, 1.0));
  edit->add_option("--save-as", o.save_as, "Write the result as a named blendshape file");
  edit->add_option("--description", o.description);
  edit->add_flag("--points", o.with_points, "Include reconstructed landmarks");
  edit->add_option("--out", o.out);
  common(edit);

  auto* train = app.add_subcommand("train-adaptor", "Train the parameter-to-latent adaptor");
  train->add_option("--model", o.model)->required();
  train->add_option("--dataset", o.dataset)->required();
  train->add_option("--k", o.k, "Parameter degree");
  train->add_option("--w", o.w, "Latent width");
  train->add_option("--seed", o.seed, "Seed for surrogate, init and batching");
  train->add_option("--steps", o.steps);
  train->add_option("--batch", o.batch);
  train->add_option("--lr", o.lr);
  train->add_option("--lambda-rgb", o.lambda_rgb);
  train->add_option("--lambda-pose-reg", o.lambda_pose_reg);
  train->add_option("--loss", o.loss)->check(CLI::IsMember({"rgb", "latent"}));
  train->add_flag("--no-pose-reg", o.no_pose_reg);
  train->add_option("--raster", o.raster, "Raster height and width");
  train->add_option("--sigma", o.sigma, "Splat width (canonical units)");
  train->add_option("--out", o.out, "Adaptor file to write");
  train->add_option("--report", o.report, "Training report file to write");
  common(train);

  auto* eval = app.add_subcommand("eval-nme", "Reconstruction NME for a list of degrees");
  eval->add_option("--model", o.model)->required();
  eval->add_option("--dataset", o.dataset)->required();
  eval->add_option("--ks", o.ks, "Comma-separated degrees (capped at m)");
  eval->add_option("--out", o.out);
  common(eval);

  auto* exp = app.add_subcommand("export-model", "Validate a model file and re-export it");
  exp->add_option("--model", o.model)->required();
  exp->add_option("--out", o.out);
  common(exp);

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--host", o.host);
  serve->add_option("--port", o.port);
  serve->add_option("--state-dir", o.state_dir);
  serve->add_option("--model", o.model, "Model file to install into the state directory");
  serve->add_option("--dataset", o.dataset, "Dataset to install into the state directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*build) return cmd_build(o);
    if (*fit) return cmd_fit(o);
    if (*rec) return cmd_reconstruct(o);
    if (*edit) return cmd_edit(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*exp) return cmd_export(o);
    if (*serve) {
      if (!o.model.empty() || !o.dataset.empty()) {
        std::filesystem::create_directories(o.state_dir);
        if (!o.model.empty())
          lpmm::io::write_file(o.state_dir + "/model.json", lpmm::serialize_model(load_model(o.model)));
        if (!o.dataset.empty())
          lpmm::io::write_file(o.state_dir + "/dataset.jsonl",
                               lpmm::serialize_landmark_records(load_dataset(o.dataset)));
      }
      return cmd_serve(o);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << e.code_string() << "]: " << e.what() << "\n";
    return e.kind() == lpmm::ErrorKind::validation ? kExitValidation : kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return 0;
}
