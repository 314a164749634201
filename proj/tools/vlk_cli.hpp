#pragma once

// Subcommand driver for the `vlk` tool. Machine-readable JSON goes to `out`,
// human summaries and diagnostics to `err`. Exit codes: 0 success, 1 usage
// error, 2 data or validation error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlk/vlk.hpp"

namespace vlk::cli {

inline constexpr const char* kVersion = "vlk 1.0.0";

using nlohmann::json;

namespace detail {

inline Dims dims_from(const std::vector<std::int64_t>& v, const char* flag) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw CLI::ValidationError(flag, "expects 1 or 3 integers");
}

inline json dims_json(const Dims& d) { return json::array({d[0], d[1], d[2]}); }

inline json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline json summary_json(const std::vector<double>& v) {
  return {{"mean", mean(v)}, {"sd", sample_sd(v)}, {"median", median(v)},
          {"min", v.empty() ? 0.0 : *std::min_element(v.begin(), v.end())},
          {"max", v.empty() ? 0.0 : *std::max_element(v.begin(), v.end())}};
}

inline json transform_json(const RigidTransform& t) {
  return {{"euler_deg", vec_json(t.euler_deg)}, {"translation_vox", vec_json(t.translation_vox)}};
}

inline json report_json(const AgreementReport& r) {
  return {{"n", r.n},
          {"percent", r.percent},
          {"bias", r.bias},
          {"sd", r.sd},
          {"loa_low", r.loa_low},
          {"loa_high", r.loa_high},
          {"loa_width", r.loa_width},
          {"mean_abs_diff", r.mean_abs_diff},
          {"wilcoxon_p", r.wilcoxon_p}};
}

inline InversionMode parse_mode(const std::string& s) {
  if (s == "standard") return InversionMode::standard;
  if (s == "coordinate-guided") return InversionMode::coordinate_guided;
  throw CLI::ValidationError("--mode", "must be standard or coordinate-guided");
}

/// Dice and ASD of `pred` against `gt` per class 1..10 plus vessel means.
inline json evaluation_json(const LabelVolume& pred, const LabelVolume& gt) {
  require_same_grid(pred.dims(), gt.dims(), "eval");
  json dice = json::object(), asd_mm = json::object();
  std::vector<double> vessel_dice, vessel_asd;
  for (int c = kFirstVessel; c <= kNonAnnotated; ++c) {
    const std::string name(ClassMap::name(c));
    const double d = dice_per_class(pred, gt, c);
    dice[name] = d;
    const auto a = asd_class(pred, gt, static_cast<std::uint8_t>(c));
    asd_mm[name] = a ? json(*a) : json(nullptr);
    if (ClassMap::is_vessel(c)) {
      vessel_dice.push_back(d);
      if (a) vessel_asd.push_back(*a);
    }
  }
  return {{"dice", dice},
          {"asd_mm", asd_mm},
          {"mean_dice_vessels", mean(vessel_dice)},
          {"mean_asd_mm_vessels", vessel_asd.empty() ? json(nullptr) : json(mean(vessel_asd))},
          {"asd_vessels_evaluated", vessel_asd.size()}};
}

struct CsvPair {
  std::string vessel;
  MeasurementPair pair;
};

inline std::vector<CsvPair> read_pairs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open pairs CSV");
  std::vector<CsvPair> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3) throw FormatError(path, "line " + std::to_string(lineno) + ": expected vessel,manual,auto");
    try {
      std::size_t used1 = 0, used2 = 0;
      const double m = std::stod(cells[1], &used1);
      const double a = std::stod(cells[2], &used2);
      rows.push_back({cells[0], {m, a}});
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header
      throw FormatError(path, "line " + std::to_string(lineno) + ": non-numeric measurement");
    }
  }
  if (rows.empty()) throw EmptyInputError(path + ": no measurement pairs");
  return rows;
}

inline std::unique_ptr<Predictor> make_predictor(const std::string& spec, const std::optional<std::string>& centerlines,
                                                 double flip_rate, std::uint64_t seed) {
  if (spec == "oracle") {
    if (!centerlines) throw CLI::ValidationError("--centerlines", "required with --predictor oracle");
    auto cl = read_centerlines(*centerlines);
    if (flip_rate > 0.0) return std::make_unique<NoisyOraclePredictor>(std::move(cl), flip_rate, seed);
    return std::make_unique<OraclePredictor>(std::move(cl));
  }
  return std::make_unique<SubprocessPredictor>(spec);
}

}  // namespace detail

/// Parses argv and runs one subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace detail;
  CLI::App app{"Intracranial artery labeling toolkit: phantoms, label generation, TTA uncertainty, metrics"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  json config = {{"version", kVersion}};
  std::function<void()> action;

  // phantom ------------------------------------------------------------------
  struct {
    std::vector<std::int64_t> dims{96};
    std::uint64_t seed = 0;
    std::string seg, centerlines, velocity;
    std::vector<std::string> stenoses;
  } ph;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic Circle-of-Willis phantom");
  phantom->add_option("--dims", ph.dims, "Grid size (1 or 3 integers, each >= 64)")->expected(1, 3);
  phantom->add_option("--seed", ph.seed, "Jitter seed")->required();
  phantom->add_option("--out-seg", ph.seg, "Binary segmentation volume path")->required();
  phantom->add_option("--out-centerlines", ph.centerlines, "Centerline JSON path")->required();
  phantom->add_option("--out-velocity", ph.velocity, "Velocity volume path");
  phantom->add_option("--stenosis", ph.stenoses, "segment,center,severity,extent (repeatable)");
  phantom->callback([&] {
    action = [&] {
      PhantomSpec spec = default_cow_spec(dims_from(ph.dims, "--dims"), ph.seed);
      for (const auto& s : ph.stenoses) {
        std::stringstream ss(s);
        Stenosis st;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(ss >> st.segment >> c1 >> st.center >> c2 >> st.severity >> c3 >> st.extent) || c1 != ',' ||
            c2 != ',' || c3 != ',')
          throw CLI::ValidationError("--stenosis", "expected segment,center,severity,extent");
        spec.stenoses.push_back(st);
      }
      const Phantom p = generate_phantom(spec);
      write_volume(p.segmentation, ph.seg);
      write_centerlines(p.centerlines, ph.centerlines);
      if (!ph.velocity.empty()) write_volume(p.velocity, ph.velocity);
      config["phantom"] = {{"dims", dims_json(spec.dims)}, {"seed", ph.seed}, {"stenoses", ph.stenoses}};
      out << json{{"config", config},
                  {"foreground_voxels", p.segmentation.count_nonzero()},
                  {"centerlines", p.centerlines.size()},
                  {"centerline_points", total_points(p.centerlines)}}
                 .dump(2)
          << '\n';
      err << "phantom: " << p.segmentation.count_nonzero() << " foreground voxels, " << p.centerlines.size()
          << " centerlines\n";
    };
  });

  // make-labels ----------------------------------------------------------------
  struct {
    std::string seg, centerlines, out;
    int neighborhood = 7;
  } ml;
  auto* make_labels = app.add_subcommand("make-labels", "Transfer centerline labels to segmentation voxels");
  make_labels->add_option("--seg", ml.seg, "Binary segmentation volume")->required();
  make_labels->add_option("--centerlines", ml.centerlines, "Centerline JSON")->required();
  make_labels->add_option("--out", ml.out, "Output label volume")->required();
  make_labels->add_option("--neighborhood", ml.neighborhood, "Odd cube side in voxels");
  make_labels->callback([&] {
    action = [&] {
      const auto seg = read_volume<std::uint8_t>(ml.seg);
      const auto labels = assign_voxel_labels(seg, read_centerlines(ml.centerlines), ml.neighborhood);
      write_volume(labels, ml.out);
      json counts = json::object();
      for (int c = 1; c < kNumClasses; ++c)
        counts[std::string(ClassMap::name(c))] =
            std::count(labels.data().begin(), labels.data().end(), static_cast<std::uint8_t>(c));
      config["make-labels"] = {{"seg", ml.seg}, {"centerlines", ml.centerlines}, {"neighborhood", ml.neighborhood}};
      out << json{{"config", config}, {"voxel_counts", counts}}.dump(2) << '\n';
      err << "make-labels: wrote " << ml.out << "\n";
    };
  });

  // preprocess -----------------------------------------------------------------
  struct {
    std::string mode, in, out, plan, patches_prefix;
    std::vector<std::int64_t> target{128, 256, 256};
    std::vector<std::int64_t> patch{80, 224, 160};
    double margin = 0.15;
    double step = 0.5;
    bool gaussian = false;
  } pp;
  auto* preprocess = app.add_subcommand("preprocess", "Fixed-size or patch preprocessing");
  preprocess->add_option("--mode", pp.mode, "fixed or patches")->required()->check(CLI::IsMember({"fixed", "patches"}));
  preprocess->add_option("--in", pp.in, "Input uint8 volume")->required();
  preprocess->add_option("--out", pp.out, "Output volume (fixed mode)");
  preprocess->add_option("--target", pp.target, "Target dims (fixed mode)")->expected(3);
  preprocess->add_option("--margin", pp.margin, "Zero margin fraction (fixed mode)");
  preprocess->add_option("--out-plan", pp.plan, "PatchPlan JSON path (patches mode)");
  preprocess->add_option("--out-patches", pp.patches_prefix, "Write patch volumes as <prefix>.p<i>");
  preprocess->add_option("--patch", pp.patch, "Patch dims (patches mode)")->expected(3);
  preprocess->add_option("--step", pp.step, "Stride as a fraction of the patch");
  preprocess->add_flag("--gaussian", pp.gaussian, "Record Gaussian stitch weights in the plan");
  preprocess->callback([&] {
    action = [&] {
      const auto in = read_volume<std::uint8_t>(pp.in);
      if (pp.mode == "fixed") {
        if (pp.out.empty()) throw CLI::ValidationError("--out", "required in fixed mode");
        const Dims target = dims_from(pp.target, "--target");
        const BoundingBox box = tight_bbox(in);
        const auto result = preprocess_fixed(in, pp.margin, target);
        write_volume(result, pp.out);
        config["preprocess"] = {{"mode", "fixed"}, {"target", dims_json(target)}, {"margin", pp.margin}};
        out << json{{"config", config},
                    {"bbox", {{"min", box.min}, {"max", box.max}}},
                    {"padded_bbox", {{"min", pad_bbox(box, pp.margin, in.dims()).min},
                                     {"max", pad_bbox(box, pp.margin, in.dims()).max}}},
                    {"scale", fit_scale(extract_with_margin(in, box, pp.margin).dims(), target)},
                    {"output_dims", dims_json(result.dims())}}
                       .dump(2)
            << '\n';
        return;
      }
      const PatchPlan plan = plan_patches(in.dims(), dims_from(pp.patch, "--patch"), pp.step,
                                          pp.gaussian ? PatchWeights::gaussian : PatchWeights::uniform);
      json offsets = json::array();
      for (const auto& o : plan.offsets) offsets.push_back(o);
      json pj = {{"volume_dims", dims_json(plan.volume_dims)},
                 {"padded_dims", dims_json(plan.padded_dims)},
                 {"patch_dims", dims_json(plan.patch_dims)},
                 {"weights", pp.gaussian ? "gaussian" : "uniform"},
                 {"offsets", offsets}};
      if (!pp.plan.empty()) {
        std::ofstream f(pp.plan);
        if (!f) throw IoError(pp.plan, "cannot open for writing");
        f << pj.dump(2) << '\n';
      }
      if (!pp.patches_prefix.empty())
        for (std::size_t i = 0; i < plan.offsets.size(); ++i)
          write_volume(extract_patch(in, plan.offsets[i], plan.patch_dims), pp.patches_prefix + ".p" + std::to_string(i));
      config["preprocess"] = {{"mode", "patches"}, {"step", pp.step}};
      out << json{{"config", config}, {"plan", pj}}.dump(2) << '\n';
      err << "preprocess: " << plan.offsets.size() << " patches\n";
    };
  });

  // tta ------------------------------------------------------------------------
  struct {
    std::string seg, predictor = "oracle", mode = "coordinate-guided", out_labels, out_uncertainty;
    std::optional<std::string> centerlines;
    std::uint32_t k = 7;
    std::uint64_t seed = 0;
    double flip_rate = 0.0;
    int search_radius = 2;
  } tt;
  auto* tta = app.add_subcommand("tta", "Test-time augmentation with consensus and uncertainty");
  tta->add_option("--seg", tt.seg, "Binary segmentation volume")->required();
  tta->add_option("--predictor", tt.predictor, "'oracle' or a command template with {in} and {out}");
  tta->add_option("--centerlines", tt.centerlines, "Centerline JSON (oracle predictor)");
  tta->add_option("--flip-rate", tt.flip_rate, "Label noise for the oracle predictor");
  tta->add_option("--k", tt.k, "Number of augmentations (>= 2)");
  tta->add_option("--seed", tt.seed, "Augmentation seed")->required();
  tta->add_option("--mode", tt.mode, "standard or coordinate-guided");
  tta->add_option("--search-radius", tt.search_radius, "Coordinate-guided fallback radius");
  tta->add_option("--out-labels", tt.out_labels, "Consensus label volume")->required();
  tta->add_option("--out-uncertainty", tt.out_uncertainty, "Uncertainty volume (float32)")->required();
  tta->callback([&] {
    action = [&] {
      const auto seg = read_volume<std::uint8_t>(tt.seg);
      const auto predictor = make_predictor(tt.predictor, tt.centerlines, tt.flip_rate, tt.seed);
      TtaOptions opt;
      opt.k = tt.k;
      opt.seed = tt.seed;
      opt.mode = parse_mode(tt.mode);
      opt.search_radius = tt.search_radius;
      const auto stack = run_tta(seg, *predictor, opt);
      const auto cons = consensus_and_uncertainty(stack);
      write_volume(cons.labels, tt.out_labels);
      write_volume(volume_cast<float>(cons.uncertainty), tt.out_uncertainty);
      json transforms = json::array();
      for (const auto& t : stack.transforms) transforms.push_back(transform_json(t));
      double fg_unc = 0.0;
      std::int64_t fg = 0;
      for (std::int64_t i = 0; i < seg.size(); ++i)
        if (seg[i]) {
          fg_unc += cons.uncertainty[i];
          ++fg;
        }
      json warnings = json::array();
      if (auto* sp = dynamic_cast<const SubprocessPredictor*>(predictor.get()))
        for (const auto& w : sp->warnings()) warnings.push_back(w);
      config["tta"] = {{"seg", tt.seg}, {"predictor", tt.predictor}, {"k", tt.k}, {"seed", tt.seed},
                       {"mode", tt.mode}, {"flip_rate", tt.flip_rate}, {"search_radius", tt.search_radius}};
      out << json{{"config", config},
                  {"transforms", transforms},
                  {"mean_foreground_uncertainty", fg ? fg_unc / static_cast<double>(fg) : 0.0},
                  {"warnings", warnings}}
                 .dump(2)
          << '\n';
      err << "tta: " << tt.k << " augmentations, " << to_string(opt.mode) << " inversion\n";
    };
  });

  // eval -----------------------------------------------------------------------
  struct {
    std::string pred, gt;
    bool per_class = false, json_out = false;
  } ev;
  auto* eval = app.add_subcommand("eval", "Dice and ASD per class");
  eval->add_option("--pred", ev.pred, "Predicted label volume")->required();
  eval->add_option("--gt", ev.gt, "Reference label volume")->required();
  eval->add_flag("--per-class", ev.per_class, "Include per-class entries (always on)");
  eval->add_flag("--json", ev.json_out, "JSON output (always on)");
  eval->callback([&] {
    action = [&] {
      const auto pred = read_volume<std::uint8_t>(ev.pred);
      const auto gt = read_volume<std::uint8_t>(ev.gt);
      require_labels(pred, "prediction");
      require_labels(gt, "reference");
      json r = evaluation_json(pred, gt);
      config["eval"] = {{"pred", ev.pred}, {"gt", ev.gt}};
      r["config"] = config;
      out << r.dump(2) << '\n';
      err << "eval: mean vessel Dice " << r["mean_dice_vessels"].get<double>() << "\n";
    };
  });

  // appendix-a -----------------------------------------------------------------
  struct {
    std::string seg, labels;
    std::uint32_t n = 100;
    std::uint64_t seed = 0;
    int search_radius = 2;
  } ap;
  auto* appendix = app.add_subcommand("appendix-a", "Standard vs coordinate-guided label inversion");
  appendix->add_option("--seg", ap.seg, "Binary segmentation volume")->required();
  appendix->add_option("--labels", ap.labels, "Label volume")->required();
  appendix->add_option("--n", ap.n, "Number of random transforms");
  appendix->add_option("--seed", ap.seed, "Transform seed")->required();
  appendix->add_option("--search-radius", ap.search_radius, "Coordinate-guided fallback radius");
  appendix->callback([&] {
    action = [&] {
      const auto seg = read_volume<std::uint8_t>(ap.seg);
      const auto labels = read_volume<std::uint8_t>(ap.labels);
      require_binary(seg, "segmentation");
      require_labels(labels, "labels");
      const auto cmp = compare_inversions(labels, seg, ap.n, ap.seed, ap.search_radius);
      std::size_t better = 0;
      for (std::size_t i = 0; i < cmp.standard.size(); ++i) better += cmp.coordinate_guided[i] < cmp.standard[i];
      config["appendix-a"] = {{"seg", ap.seg}, {"labels", ap.labels}, {"n", ap.n}, {"seed", ap.seed},
                              {"search_radius", ap.search_radius}};
      out << json{{"config", config},
                  {"standard", cmp.standard},
                  {"coordinate_guided", cmp.coordinate_guided},
                  {"standard_summary", summary_json(cmp.standard)},
                  {"coordinate_guided_summary", summary_json(cmp.coordinate_guided)},
                  {"trials_coordinate_guided_better", better}}
                 .dump(2)
          << '\n';
      err << "appendix-a: standard mean " << 100.0 * mean(cmp.standard) << "%, coordinate-guided mean "
          << 100.0 * mean(cmp.coordinate_guided) << "%\n";
    };
  });

  // agree ----------------------------------------------------------------------
  struct {
    std::string pairs, scatter;
    bool percent = false, json_out = false;
  } ag;
  auto* agree = app.add_subcommand("agree", "Bland-Altman and Wilcoxon per vessel");
  agree->add_option("--pairs", ag.pairs, "CSV with vessel,manual,auto rows")->required();
  agree->add_flag("--percent", ag.percent, "Differences as % of the pair mean");
  agree->add_flag("--json", ag.json_out, "JSON output (always on)");
  agree->add_option("--scatter", ag.scatter, "Write Bland-Altman scatter CSV (vessel,mean,difference)");
  agree->callback([&] {
    action = [&] {
      const auto rows = read_pairs_csv(ag.pairs);
      std::map<std::string, std::vector<MeasurementPair>> by_vessel;
      std::vector<MeasurementPair> all;
      for (const auto& r : rows) {
        by_vessel[r.vessel].push_back(r.pair);
        all.push_back(r.pair);
      }
      json table = json::object();
      for (const auto& [vessel, pairs] : by_vessel) {
        if (pairs.size() < 2) {
          table[vessel] = {{"n", pairs.size()}, {"error", "fewer than 2 pairs"}};
          continue;
        }
        table[vessel] = report_json(agreement_report(pairs, ag.percent));
      }
      if (!ag.scatter.empty()) {
        std::ofstream f(ag.scatter);
        if (!f) throw IoError(ag.scatter, "cannot open for writing");
        f << "vessel,mean,difference\n";
        for (const auto& r : rows) {
          const auto d = pair_differences({r.pair}, ag.percent);
          f << r.vessel << ',' << 0.5 * (r.pair.manual + r.pair.automatic) << ',' << d[0] << '\n';
        }
      }
      config["agree"] = {{"pairs", ag.pairs}, {"percent", ag.percent}};
      json result = {{"config", config}, {"vessels", table}};
      if (all.size() >= 2) result["pooled"] = report_json(agreement_report(all, ag.percent));
      out << result.dump(2) << '\n';
      err << "agree: " << rows.size() << " pairs over " << by_vessel.size() << " vessels\n";
    };
  });

  // pipeline -------------------------------------------------------------------
  struct {
    std::vector<std::int64_t> dims{96};
    std::uint64_t seed = 0;
    std::uint32_t k = 7;
    std::uint32_t subjects = 1;
    std::string predictor = "oracle", mode = "coordinate-guided", out_dir;
    double flip_rate = 0.0;
    int search_radius = 2;
  } pl;
  auto* pipeline = app.add_subcommand("pipeline", "Phantom -> labels -> TTA -> eval -> velocity agreement");
  pipeline->add_option("--dims", pl.dims, "Grid size (1 or 3 integers, each >= 64)")->expected(1, 3);
  pipeline->add_option("--seed", pl.seed, "Base seed (subject s uses seed + s)")->required();
  pipeline->add_option("--k", pl.k, "Number of augmentations");
  pipeline->add_option("--subjects", pl.subjects, "Number of phantom subjects");
  pipeline->add_option("--predictor", pl.predictor, "'oracle' or a command template with {in} and {out}");
  pipeline->add_option("--flip-rate", pl.flip_rate, "Label noise for the oracle predictor");
  pipeline->add_option("--mode", pl.mode, "standard or coordinate-guided");
  pipeline->add_option("--search-radius", pl.search_radius, "Coordinate-guided fallback radius");
  pipeline->add_option("--out-dir", pl.out_dir, "Directory for intermediate volumes");
  pipeline->callback([&] {
    action = [&] {
      if (pl.subjects < 1) throw CLI::ValidationError("--subjects", "must be >= 1");
      const Dims dims = dims_from(pl.dims, "--dims");
      const InversionMode mode = parse_mode(pl.mode);
      if (!pl.out_dir.empty()) std::filesystem::create_directories(pl.out_dir);

      json subjects = json::array();
      std::vector<MeasurementPair> pooled;
      std::map<int, std::vector<MeasurementPair>> per_vessel;
      std::vector<double> dice_means, asd_means, layer_miss;
      double worst_velocity_pct = 0.0;

      for (std::uint32_t s = 0; s < pl.subjects; ++s) {
        const std::uint64_t seed = pl.seed + s;
        const Phantom p = generate_phantom(default_cow_spec(dims, seed));
        const LabelVolume gt = assign_voxel_labels(p.segmentation, p.centerlines);

        std::unique_ptr<Predictor> predictor;
        if (pl.predictor == "oracle")
          predictor = pl.flip_rate > 0.0
                          ? std::unique_ptr<Predictor>(std::make_unique<NoisyOraclePredictor>(p.centerlines, pl.flip_rate, seed))
                          : std::make_unique<OraclePredictor>(p.centerlines);
        else
          predictor = std::make_unique<SubprocessPredictor>(pl.predictor);

        TtaOptions opt;
        opt.k = pl.k;
        opt.seed = seed;
        opt.mode = mode;
        opt.search_radius = pl.search_radius;
        const auto stack = run_tta(p.segmentation, *predictor, opt);
        const auto cons = consensus_and_uncertainty(stack);

        std::vector<double> miss;
        for (const auto& layer : stack.layers) miss.push_back(misassigned_fraction(gt, layer));
        layer_miss.insert(layer_miss.end(), miss.begin(), miss.end());

        json ev = evaluation_json(cons.labels, gt);
        dice_means.push_back(ev["mean_dice_vessels"].get<double>());
        if (!ev["mean_asd_mm_vessels"].is_null()) asd_means.push_back(ev["mean_asd_mm_vessels"].get<double>());

        // Velocity comparison at flow resolution: consensus vs reference labels.
        const LabelVolume gt_low = downsample2_labels(gt);
        const LabelVolume auto_low = downsample2_labels(cons.labels);
        const FloatVolume vel_low = downsample2_mean(p.velocity);
        json velocity = json::object();
        for (int c = kFirstVessel; c <= kLastVessel; ++c) {
          const auto label = static_cast<std::uint8_t>(c);
          if (!class_present(gt_low, label) || !class_present(auto_low, label)) {
            velocity[std::string(ClassMap::name(c))] = nullptr;
            continue;
          }
          const MeasurementPair mp{region_mean(vel_low, gt_low, label), region_mean(vel_low, auto_low, label)};
          const double pct = 100.0 * (mp.automatic - mp.manual) / (0.5 * (mp.automatic + mp.manual));
          worst_velocity_pct = std::max(worst_velocity_pct, std::abs(pct));
          velocity[std::string(ClassMap::name(c))] = {
              {"manual_cm_s", mp.manual}, {"auto_cm_s", mp.automatic}, {"percent_diff", pct}};
          pooled.push_back(mp);
          per_vessel[c].push_back(mp);
        }

        if (!pl.out_dir.empty()) {
          const auto base = (std::filesystem::path(pl.out_dir) / ("subject" + std::to_string(s))).string();
          write_volume(p.segmentation, base + "_seg");
          write_centerlines(p.centerlines, base + "_centerlines.json");
          write_volume(p.velocity, base + "_velocity");
          write_volume(gt, base + "_labels");
          write_volume(cons.labels, base + "_consensus");
          write_volume(volume_cast<float>(cons.uncertainty), base + "_uncertainty");
        }

        json transforms = json::array();
        for (const auto& t : stack.transforms) transforms.push_back(transform_json(t));
        subjects.push_back({{"seed", seed},
                            {"foreground_voxels", p.segmentation.count_nonzero()},
                            {"evaluation", ev},
                            {"tta_transforms", transforms},
                            {"tta_layer_misassignment", miss},
                            {"velocity", velocity}});
        err << "pipeline: subject " << s << " mean vessel Dice " << dice_means.back() << "\n";
      }

      json agreement = json::object();
      if (pooled.size() >= 2) {
        agreement["pooled"] = report_json(agreement_report(pooled, false));
        agreement["pooled_percent"] = report_json(agreement_report(pooled, true));
      }
      json vessels = json::object();
      for (const auto& [c, pairs] : per_vessel)
        if (pairs.size() >= 2) vessels[std::string(ClassMap::name(c))] = report_json(agreement_report(pairs, false));
      agreement["per_vessel"] = vessels;

      config["pipeline"] = {{"dims", dims_json(dims)}, {"seed", pl.seed}, {"k", pl.k}, {"subjects", pl.subjects},
                            {"predictor", pl.predictor}, {"flip_rate", pl.flip_rate}, {"mode", pl.mode},
                            {"search_radius", pl.search_radius}, {"out_dir", pl.out_dir}};
      out << json{{"config", config},
                  {"subjects", subjects},
                  {"summary",
                   {{"mean_dice_vessels", mean(dice_means)},
                    {"mean_asd_mm_vessels", asd_means.empty() ? json(nullptr) : json(mean(asd_means))},
                    {"tta_layer_misassignment", summary_json(layer_miss)},
                    {"max_abs_velocity_percent_diff", worst_velocity_pct}}},
                  {"agreement", agreement}}
                 .dump(2)
          << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    err << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (action) action();
    return 0;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const PredictorError& e) {
    err << "error: " << e.what() << '\n';
    if (!e.diagnostics().empty()) err << "predictor output:\n" << e.diagnostics() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace vlk::cli
