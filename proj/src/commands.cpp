#include "earlock/commands.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "earlock/divergence.hpp"
#include "earlock/parallel.hpp"
#include "earlock/template_io.hpp"

namespace earlock {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt_score(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

bool is_image_file(const fs::path& p) {
  const std::string name = p.filename().string();
  if (name.size() > 9 && name.substr(name.size() - 9) == ".mask.png") return false;
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".ppm";
}

std::vector<std::string> list_images(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path()))
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> list_subject_dirs(const fs::path& root) {
  std::vector<std::string> out;
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root.string());
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string mtime_iso8601(const std::string& path) {
  struct stat st {};
  if (::stat(path.c_str(), &st) != 0) return "-";
  struct tm tm_utc {};
  gmtime_r(&st.st_mtime, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// All six method x metric scores for one probe/gallery pair; the Euclidean
// and count scores per context share one mutual-NN pass.
struct ScoreBundle {
  double value[3][2];  // [method][metric]

  double& at(Method m, Metric k) { return value[static_cast<int>(m)][static_cast<int>(k)]; }
  double at(Method m, Metric k) const { return value[static_cast<int>(m)][static_cast<int>(k)]; }
};

double pairs_to_distance(const std::vector<DescriptorPair>& pairs) {
  if (pairs.empty()) return kInf;
  double sq = 0.0;
  for (const auto& p : pairs) sq += p.distance * p.distance;
  return std::sqrt(sq) / static_cast<double>(pairs.size());
}

ScoreBundle score_pair(const Template& probe, const Template& gallery, const MatchConfig& cfg) {
  ScoreBundle b{};
  auto both = [&](const FeatureSet& p, const FeatureSet& g, Method m) {
    if (p.features.empty() || g.features.empty()) {
      b.at(m, Metric::kEuclidean) = kInf;
      b.at(m, Metric::kNearestNeighbor) = kInf;
      return;
    }
    const auto pairs = mutual_nn_pairs(p, g, cfg.ratio);
    b.at(m, Metric::kEuclidean) = pairs_to_distance(pairs);
    b.at(m, Metric::kNearestNeighbor) = -static_cast<double>(pairs.size());
  };
  both(probe.whole_features, gallery.whole_features, Method::kNoSegmentation);
  both(probe.concat_features, gallery.concat_features, Method::kConcat);
  b.at(Method::kDs, Metric::kEuclidean) =
      match_score(probe, gallery, Method::kDs, Metric::kEuclidean, cfg);
  b.at(Method::kDs, Metric::kNearestNeighbor) =
      match_score(probe, gallery, Method::kDs, Metric::kNearestNeighbor, cfg);
  return b;
}

void write_text_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Minimal polyline SVG, fixed viewport with unit-square axes.
std::string render_svg(const std::string& title,
                       const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves,
                       const std::string& x_label, const std::string& y_label) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const int W = 640, H = 480, ml = 60, mr = 20, mt = 40, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  svg << "<text x=\"16\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << mt + ph / 2
      << ")\">" << y_label << "</text>\n";
  int ci = 0;
  for (const auto& [name, pts] : curves) {
    const char* color = kColors[ci % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) {
      const double px = ml + std::clamp(x, 0.0, 1.0) * pw;
      const double py = mt + (1.0 - std::clamp(y, 0.0, 1.0)) * ph;
      svg << px << "," << py << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << ml + pw - 150 << "\" y=\"" << mt + 16 + 16 * ci
        << "\" font-size=\"12\" fill=\"" << color << "\">" << name << "</text>\n";
    ++ci;
  }
  svg << "</svg>\n";
  return svg.str();
}

struct ProbeEntry {
  std::string subject;
  std::string path;
  std::string probe_id;  // "{subject}/{filename}"
};

std::vector<ProbeEntry> list_probe_entries(const fs::path& dataset_dir) {
  std::vector<ProbeEntry> out;
  for (const std::string& subject : list_subject_dirs(dataset_dir)) {
    for (const std::string& img : list_images(dataset_dir / subject / "probe")) {
      ProbeEntry e;
      e.subject = subject;
      e.path = img;
      e.probe_id = subject + "/" + fs::path(img).filename().string();
      out.push_back(std::move(e));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ProbeEntry& a, const ProbeEntry& b) { return a.probe_id < b.probe_id; });
  return out;
}

// Builds templates for every ref image under a dataset root (one per
// subject); used by calibrate which needs a gallery outside the store.
std::vector<Template> build_reference_templates(const fs::path& dataset_dir,
                                                const RunConfig& config) {
  const auto subjects = list_subject_dirs(dataset_dir);
  std::vector<std::pair<std::string, std::string>> refs;
  for (const auto& subject : subjects) {
    const auto images = list_images(dataset_dir / subject / "ref");
    if (images.empty()) throw std::runtime_error("no reference image for subject " + subject);
    if (images.size() > 1)
      throw std::runtime_error("protocol violation: subject " + subject + " has " +
                               std::to_string(images.size()) +
                               " reference images (single-image enrollment)");
    refs.emplace_back(subject, images.front());
  }
  std::vector<Template> out(refs.size());
  parallel_for(refs.size(), [&](size_t i) {
    out[i] = build_template(refs[i].second, refs[i].first, config);
  });
  return out;
}

}  // namespace

void RunConfig::validate() const {
  em.validate();
  if (mdl_min < 1 || mdl_max > 16 || mdl_min > mdl_max)
    throw std::runtime_error("config: mdl range must satisfy 1 <= min <= max <= 16");
  if (!(match.psi > 0.0) || !(match.phi > 0.0))
    throw std::runtime_error("config: thresholds psi and phi must be positive");
  if (!(match.ratio > 0.0) || match.ratio >= 1.0)
    throw std::runtime_error("config: ratio must lie in (0,1)");
  if (match.min_pairs < 1) throw std::runtime_error("config: min_pairs must be >= 1");
  if (min_slice_pixels < 1) throw std::runtime_error("config: min_slice_pixels must be >= 1");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing config file: " + path);
  json j;
  in >> j;

  RunConfig c;
  c.match.psi = j.value("psi", c.match.psi);
  c.match.phi = j.value("phi", c.match.phi);
  c.match.ratio = j.value("ratio", c.match.ratio);
  c.match.min_pairs = j.value("min_pairs", c.match.min_pairs);
  c.seed = j.value("seed", c.seed);
  c.min_slice_pixels = j.value("min_slice_pixels", c.min_slice_pixels);
  if (j.contains("mdl_range")) {
    c.mdl_min = j["mdl_range"].at(0);
    c.mdl_max = j["mdl_range"].at(1);
  }
  if (j.contains("gray_mode"))
    c.gray_mode = j["gray_mode"] == "contrast" ? GrayMode::kContrast : GrayMode::kLuminance;
  if (j.contains("em")) {
    const json& em = j["em"];
    c.em.max_iterations = em.value("max_iterations", c.em.max_iterations);
    c.em.tolerance = em.value("tolerance", c.em.tolerance);
    c.em.covariance_floor = em.value("covariance_floor", c.em.covariance_floor);
    c.em.stride = em.value("stride", c.em.stride);
  }
  if (j.contains("sift")) {
    const json& s = j["sift"];
    c.sift.scales_per_octave = s.value("scales_per_octave", c.sift.scales_per_octave);
    c.sift.base_sigma = s.value("base_sigma", c.sift.base_sigma);
    c.sift.input_blur = s.value("input_blur", c.sift.input_blur);
    c.sift.upsample = s.value("upsample", c.sift.upsample);
    c.sift.contrast_threshold = s.value("contrast_threshold", c.sift.contrast_threshold);
    c.sift.edge_ratio = s.value("edge_ratio", c.sift.edge_ratio);
    c.sift.descriptor_clamp = s.value("descriptor_clamp", c.sift.descriptor_clamp);
  }
  c.em.seed = c.seed;
  c.validate();
  return c;
}

void save_run_config(const RunConfig& c, const std::string& path) {
  json j;
  j["psi"] = c.match.psi;
  j["phi"] = c.match.phi;
  j["ratio"] = c.match.ratio;
  j["min_pairs"] = c.match.min_pairs;
  j["seed"] = c.seed;
  j["min_slice_pixels"] = c.min_slice_pixels;
  j["mdl_range"] = {c.mdl_min, c.mdl_max};
  j["gray_mode"] = c.gray_mode == GrayMode::kContrast ? "contrast" : "luminance";
  j["em"] = {{"max_iterations", c.em.max_iterations},
             {"tolerance", c.em.tolerance},
             {"covariance_floor", c.em.covariance_floor},
             {"stride", c.em.stride}};
  j["sift"] = {{"scales_per_octave", c.sift.scales_per_octave},
               {"base_sigma", c.sift.base_sigma},
               {"input_blur", c.sift.input_blur},
               {"upsample", c.sift.upsample},
               {"contrast_threshold", c.sift.contrast_threshold},
               {"edge_ratio", c.sift.edge_ratio},
               {"descriptor_clamp", c.sift.descriptor_clamp}};
  write_text_file(path, j.dump(2) + "\n");
}

bool TemplateStore::exists() const { return fs::is_regular_file(fs::path(root_) / "index.tsv"); }

std::vector<std::string> TemplateStore::subjects() const {
  std::ifstream in(fs::path(root_) / "index.tsv");
  if (!in) throw std::runtime_error("template store has no index: " + root_);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos) out.push_back(line.substr(0, tab));
  }
  return out;
}

bool TemplateStore::contains(const std::string& subject) const {
  const auto subs = subjects();
  return std::find(subs.begin(), subs.end(), subject) != subs.end();
}

Template TemplateStore::load(const std::string& subject) const {
  std::ifstream in(fs::path(root_) / "index.tsv");
  if (!in) throw std::runtime_error("template store has no index: " + root_);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    if (line.substr(0, tab) == subject)
      return load_template((fs::path(root_) / line.substr(tab + 1)).string());
  }
  throw std::runtime_error("subject not enrolled: " + subject);
}

std::vector<Template> TemplateStore::load_all() const {
  std::vector<Template> out;
  for (const auto& s : subjects()) out.push_back(load(s));
  std::sort(out.begin(), out.end(),
            [](const Template& a, const Template& b) { return a.subject_id < b.subject_id; });
  return out;
}

void TemplateStore::write_all(const std::vector<Template>& templates) const {
  fs::create_directories(root_);
  // clear stale entries from a previous enrollment
  if (exists()) {
    for (const auto& s : subjects()) {
      std::error_code ec;
      fs::remove(fs::path(root_) / (s + ".tpl"), ec);
    }
  }
  std::vector<const Template*> sorted;
  for (const auto& t : templates) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const Template* a, const Template* b) { return a->subject_id < b->subject_id; });
  std::ostringstream index;
  for (const Template* t : sorted) {
    const std::string file = t->subject_id + ".tpl";
    save_template(*t, (fs::path(root_) / file).string());
    index << t->subject_id << "\t" << file << "\n";
  }
  write_text_file(fs::path(root_) / "index.tsv", index.str());
}

std::optional<std::string> mask_path_for(const std::string& image_path) {
  fs::path p(image_path);
  p.replace_extension();
  const std::string candidate = p.string() + ".mask.png";
  if (fs::is_regular_file(candidate)) return candidate;
  return std::nullopt;
}

double decision_threshold(const RunConfig& config, Method method, Metric metric) {
  if (metric == Metric::kNearestNeighbor) return -static_cast<double>(config.match.min_pairs);
  return method == Method::kDs ? config.match.phi : config.match.psi;
}

Template build_template(const std::string& image_path, const std::string& subject_id,
                        const RunConfig& config, std::vector<SliceRegion>* slices_out,
                        std::ostream* log) {
  config.validate();
  const ColorImage img = load_image(image_path);
  Mask mask = Mask::full(img.width, img.height);
  if (const auto mp = mask_path_for(image_path)) mask = load_mask(*mp, img.width, img.height);

  const std::vector<Rgb> masked = apply_mask(img, mask);
  const SampleMatrix samples = pixels_to_samples(masked);
  const MdlResult mdl = mdl_select(samples, config.mdl_min, config.mdl_max, config.em);

  const LabelMap labels = assign_pixels(mdl.model, img, mask);
  std::vector<SliceRegion> slices =
      extract_slices(labels, img, config.min_slice_pixels, config.gray_mode);

  Template t;
  t.subject_id = subject_id;
  t.color_model = mdl.model;
  t.created_at = mtime_iso8601(image_path);

  const GrayImage whole_gray = histogram_equalize(decolorize(img, config.gray_mode));
  t.whole_features.features = extract_sift(whole_gray, config.sift, &mask);
  t.whole_features.source = kAugmentedSource;

  std::vector<FeatureSet> slice_sets(slices.size());
  parallel_for(slices.size(), [&](size_t i) {
    slice_sets[i].features = extract_sift(slices[i].gray_patch, config.sift, &slices[i].support,
                                          slices[i].x0, slices[i].y0);
    slice_sets[i].source = static_cast<int>(i);
  });

  t.concat_features = concat_fuse(slice_sets);
  for (size_t i = 0; i < slices.size(); ++i) {
    if (slice_sets[i].features.empty()) {
      if (log)
        *log << "warning: slice " << i << " of " << subject_id
             << " produced no features; dropped from the DS representation\n";
      continue;
    }
    t.slice_components.push_back(slices[i].component_index);
    t.slice_gaussians.push_back(
        mdl.model.components[slices[i].component_index].gaussian);
    FeatureSet fs = std::move(slice_sets[i]);
    fs.source = static_cast<int>(t.per_slice_features.size());
    t.per_slice_features.push_back(std::move(fs));
  }

  if (slices_out) *slices_out = std::move(slices);
  t.validate();
  return t;
}

int cmd_enroll(const std::string& dataset_dir, const std::string& store_dir,
               const RunConfig& config, const std::string& dump_slices_dir, std::ostream& log) {
  const auto subjects = list_subject_dirs(dataset_dir);
  if (subjects.empty()) throw std::runtime_error("dataset has no subject directories");

  std::vector<std::pair<std::string, std::string>> refs;
  for (const auto& subject : subjects) {
    const auto images = list_images(fs::path(dataset_dir) / subject / "ref");
    if (images.empty())
      throw std::runtime_error("no reference image for subject " + subject);
    if (images.size() > 1)
      throw std::runtime_error("protocol violation: subject " + subject + " has " +
                               std::to_string(images.size()) +
                               " reference images (single-image enrollment)");
    refs.emplace_back(subject, images.front());
  }

  std::vector<Template> templates(refs.size());
  std::vector<std::vector<SliceRegion>> slices(refs.size());
  parallel_for(refs.size(), [&](size_t i) {
    templates[i] = build_template(refs[i].second, refs[i].first, config, &slices[i]);
  });

  TemplateStore store(store_dir);
  store.write_all(templates);

  if (!dump_slices_dir.empty()) {
    fs::create_directories(dump_slices_dir);
    for (size_t i = 0; i < refs.size(); ++i) {
      const std::string instance = fs::path(refs[i].second).stem().string();
      for (size_t s = 0; s < slices[i].size(); ++s) {
        const std::string stem = refs[i].first + "_" + instance + "_slice" + std::to_string(s);
        save_png(slices[i][s].color_patch, (fs::path(dump_slices_dir) / (stem + ".png")).string());
        save_png(slices[i][s].gray_patch,
                 (fs::path(dump_slices_dir) / (stem + "_gray.png")).string());
      }
    }
  }

  for (size_t i = 0; i < templates.size(); ++i)
    log << templates[i].subject_id << ": k=" << templates[i].color_model.size()
        << " slices=" << templates[i].per_slice_features.size()
        << " keypoints=" << templates[i].concat_features.features.size()
        << " whole=" << templates[i].whole_features.features.size() << "\n";
  log << "enrolled " << templates.size() << " subjects into " << store_dir << "\n";
  return 0;
}

int cmd_identify(const std::string& probe_path, const std::string& store_dir,
                 const RunConfig& config, Method method, Metric metric, int top_k,
                 std::ostream& out) {
  TemplateStore store(store_dir);
  if (!store.exists()) throw std::runtime_error("template store is empty: " + store_dir);
  const std::vector<Template> gallery = store.load_all();
  if (gallery.empty()) throw std::runtime_error("template store is empty: " + store_dir);

  const Template probe =
      build_template(probe_path, fs::path(probe_path).stem().string(), config);
  const auto ranking = identify(probe, gallery, top_k, method, metric, config.match);

  out << "rank\tsubject\tscore\t(" << method_name(method) << "," << metric_name(metric) << ")\n";
  for (size_t i = 0; i < ranking.size(); ++i)
    out << i + 1 << "\t" << ranking[i].gallery_id << "\t" << fmt_score(ranking[i].score) << "\n";
  return 0;
}

int cmd_verify(const std::string& probe_path, const std::string& claimed_id,
               const std::string& store_dir, const RunConfig& config, Method method,
               Metric metric, std::ostream& out) {
  TemplateStore store(store_dir);
  const Template claimed = store.load(claimed_id);
  const Template probe =
      build_template(probe_path, fs::path(probe_path).stem().string(), config);

  const double threshold = decision_threshold(config, method, metric);
  const double score = match_score(probe, claimed, method, metric, config.match);
  const bool accept = score <= threshold;
  out << (accept ? "ACCEPT" : "REJECT") << " claim=" << claimed_id
      << " score=" << fmt_score(score) << " threshold=" << fmt_score(threshold) << " ("
      << method_name(method) << "," << metric_name(metric) << ")\n";
  return accept ? 0 : 1;
}

int cmd_evaluate(const std::string& dataset_dir, const std::string& store_dir,
                 const RunConfig& config, const EvaluateOptions& options, std::ostream& log) {
  TemplateStore store(store_dir);
  if (!store.exists()) throw std::runtime_error("template store is empty: " + store_dir);
  const std::vector<Template> gallery = store.load_all();
  if (gallery.empty()) throw std::runtime_error("template store is empty: " + store_dir);

  std::set<std::string> enrolled;
  for (const auto& g : gallery) enrolled.insert(g.subject_id);

  const auto probes = list_probe_entries(dataset_dir);
  if (probes.empty()) throw std::runtime_error("dataset has no probe images");
  for (const auto& p : probes)
    if (!enrolled.count(p.subject))
      throw std::runtime_error("closed-set violation: probe subject " + p.subject +
                               " is not enrolled");

  fs::create_directories(options.out_dir);

  std::vector<Template> probe_templates(probes.size());
  parallel_for(probes.size(), [&](size_t i) {
    probe_templates[i] = build_template(probes[i].path, probes[i].subject, config);
  });

  const size_t np = probes.size(), ng = gallery.size();
  std::vector<ScoreBundle> bundles(np * ng);
  std::vector<double> colorsim(np * ng);
  parallel_for(np, [&](size_t pi) {
    for (size_t gi = 0; gi < ng; ++gi) {
      bundles[pi * ng + gi] = score_pair(probe_templates[pi], gallery[gi], config.match);
      colorsim[pi * ng + gi] =
          color_similarity(gallery[gi].color_model, probe_templates[pi].color_model);
    }
  });

  const std::vector<Method> methods = {Method::kNoSegmentation, Method::kConcat, Method::kDs};
  const std::vector<Metric> metrics = {Metric::kEuclidean, Metric::kNearestNeighbor};

  // scores.csv and colorsim.csv
  {
    std::ostringstream csv;
    csv << "probe_id,gallery_id,rule,metric,score\n";
    for (size_t pi = 0; pi < np; ++pi)
      for (size_t gi = 0; gi < ng; ++gi)
        for (Method m : methods)
          for (Metric k : metrics)
            csv << probes[pi].probe_id << "," << gallery[gi].subject_id << "," << method_name(m)
                << "," << metric_name(k) << "," << fmt_score(bundles[pi * ng + gi].at(m, k))
                << "\n";
    write_text_file(fs::path(options.out_dir) / "scores.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "probe_id,gallery_id,color_similarity\n";
    for (size_t pi = 0; pi < np; ++pi)
      for (size_t gi = 0; gi < ng; ++gi)
        csv << probes[pi].probe_id << "," << gallery[gi].subject_id << ","
            << fmt_score(colorsim[pi * ng + gi]) << "\n";
    write_text_file(fs::path(options.out_dir) / "colorsim.csv", csv.str());
  }

  // identification (Euclidean metric per method)
  std::map<int, CmcCurve> cmc_by_method;
  std::ostringstream table1;
  table1 << "method,rank1_rate,rank5_rate\n";
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> cmc_curves_svg;
  for (Method m : methods) {
    std::vector<ProbeRanking> rankings(np);
    for (size_t pi = 0; pi < np; ++pi) {
      ProbeRanking r;
      r.true_subject = probes[pi].subject;
      for (size_t gi = 0; gi < ng; ++gi) {
        MatchRecord rec;
        rec.probe_id = probes[pi].probe_id;
        rec.gallery_id = gallery[gi].subject_id;
        rec.score = bundles[pi * ng + gi].at(m, Metric::kEuclidean);
        rec.method = m;
        rec.metric = Metric::kEuclidean;
        r.ranking.push_back(std::move(rec));
      }
      std::sort(r.ranking.begin(), r.ranking.end(),
                [](const MatchRecord& a, const MatchRecord& b) {
                  if (a.score != b.score) return a.score < b.score;
                  return a.gallery_id < b.gallery_id;
                });
      rankings[pi] = std::move(r);
    }
    const CmcCurve curve = cmc_curve(rankings, static_cast<int>(ng));
    cmc_by_method[static_cast<int>(m)] = curve;

    std::ostringstream csv;
    csv << "rank,rate\n";
    for (size_t r = 0; r < curve.rates.size(); ++r)
      csv << r + 1 << "," << fmt_score(curve.rates[r]) << "\n";
    write_text_file(fs::path(options.out_dir) / ("cmc_" + method_name(m) + ".csv"), csv.str());

    const double rank1 = curve.rates.front();
    const double rank5 = curve.rates[std::min<size_t>(4, curve.rates.size() - 1)];
    table1 << method_name(m) << "," << fmt_score(100.0 * rank1) << ","
           << fmt_score(100.0 * rank5) << "\n";

    std::vector<std::pair<double, double>> pts;
    for (size_t r = 0; r < curve.rates.size(); ++r)
      pts.emplace_back(static_cast<double>(r + 1) / static_cast<double>(ng), curve.rates[r]);
    cmc_curves_svg.emplace_back(method_name(m), std::move(pts));
  }
  write_text_file(fs::path(options.out_dir) / "identification.csv", table1.str());

  // verification: decisions, ROC and EER per cell
  std::vector<VerifyRecord> records;
  std::ostringstream eers;
  eers << "method,metric,eer,eer_threshold\n";
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> roc_curves_svg;
  for (Method m : methods) {
    for (Metric k : metrics) {
      std::vector<double> genuine, impostor;
      for (size_t pi = 0; pi < np; ++pi)
        for (size_t gi = 0; gi < ng; ++gi) {
          const double s = bundles[pi * ng + gi].at(m, k);
          const bool is_genuine = probes[pi].subject == gallery[gi].subject_id;
          (is_genuine ? genuine : impostor).push_back(s);
          VerifyRecord rec;
          rec.method = m;
          rec.metric = k;
          rec.genuine = is_genuine;
          rec.accept = s <= decision_threshold(config, m, k);
          records.push_back(rec);
        }
      const auto roc = roc_curve(genuine, impostor);
      std::ostringstream csv;
      csv << "fpr,tpr,threshold\n";
      for (const auto& p : roc)
        csv << fmt_score(p.fpr) << "," << fmt_score(p.tpr) << "," << fmt_score(p.threshold)
            << "\n";
      const std::string cell = method_name(m) + "_" + metric_name(k);
      write_text_file(fs::path(options.out_dir) / ("roc_" + cell + ".csv"), csv.str());

      double thr = 0.0;
      const double eer = equal_error_rate(genuine, impostor, &thr);
      eers << method_name(m) << "," << metric_name(k) << "," << fmt_score(eer) << ","
           << fmt_score(thr) << "\n";

      std::vector<std::pair<double, double>> pts;
      pts.emplace_back(0.0, 0.0);
      for (const auto& p : roc) pts.emplace_back(p.fpr, p.tpr);
      pts.emplace_back(1.0, 1.0);
      roc_curves_svg.emplace_back(cell, std::move(pts));
    }
  }
  write_text_file(fs::path(options.out_dir) / "eer.csv", eers.str());

  // Table-2 style verification report
  {
    const auto rows = accuracy_report(records);
    std::ostringstream csv;
    csv << "method,metric,accuracy_pct,false_positive_pct,true_negative_pct,genuine_trials,"
           "impostor_trials,in_paper\n";
    auto row_for = [&](Method m, Metric k) -> const ReportRow* {
      for (const auto& r : rows)
        if (r.method == m && r.metric == k) return &r;
      return nullptr;
    };
    // paper row order: noseg x2, concat x2, ds euclid, then the extra cell
    const std::vector<std::pair<Method, Metric>> order = {
        {Method::kNoSegmentation, Metric::kEuclidean},
        {Method::kNoSegmentation, Metric::kNearestNeighbor},
        {Method::kConcat, Metric::kEuclidean},
        {Method::kConcat, Metric::kNearestNeighbor},
        {Method::kDs, Metric::kEuclidean},
        {Method::kDs, Metric::kNearestNeighbor}};
    for (const auto& [m, k] : order) {
      const ReportRow* r = row_for(m, k);
      if (!r) continue;
      char nums[128];
      std::snprintf(nums, sizeof(nums), "%.2f,%.2f,%.2f", r->accuracy_pct, r->fp_pct, r->tn_pct);
      csv << method_name(m) << "," << metric_name(k) << "," << nums << "," << r->genuine_trials
          << "," << r->impostor_trials << "," << (r->in_paper ? "yes" : "no (not in paper)")
          << "\n";
    }
    write_text_file(fs::path(options.out_dir) / "report.csv", csv.str());
    log << "--- verification report ---\n" << csv.str();
  }

  if (options.plots) {
    write_text_file(fs::path(options.out_dir) / "cmc.svg",
                    render_svg("Cumulative Match Characteristics", cmc_curves_svg,
                               "rank / gallery size", "identification rate"));
    write_text_file(fs::path(options.out_dir) / "roc.svg",
                    render_svg("Receiver Operating Characteristics", roc_curves_svg,
                               "false positive rate", "true positive rate"));
  }

  log << "evaluated " << np << " probes against " << ng << " gallery subjects\n";
  return 0;
}

int cmd_calibrate(const std::string& calibration_dir, const std::string& store_dir,
                  const RunConfig& config, std::ostream& out, CalibrationResult* result) {
  // calibration subjects must stay disjoint from the enrolled gallery
  TemplateStore store(store_dir);
  std::set<std::string> enrolled;
  if (!store_dir.empty() && store.exists())
    for (const auto& s : store.subjects()) enrolled.insert(s);

  const auto calib_subjects = list_subject_dirs(calibration_dir);
  if (calib_subjects.size() < 2)
    throw std::runtime_error("calibration needs at least two subjects");
  for (const auto& s : calib_subjects)
    if (enrolled.count(s))
      throw std::runtime_error("calibration subject " + s + " overlaps the enrolled gallery");

  const std::vector<Template> gallery = build_reference_templates(calibration_dir, config);
  const auto probes = list_probe_entries(calibration_dir);
  std::vector<Template> probe_templates(probes.size());
  parallel_for(probes.size(), [&](size_t i) {
    probe_templates[i] = build_template(probes[i].path, probes[i].subject, config);
  });

  std::vector<double> genuine_concat, impostor_concat, genuine_ds, impostor_ds;
  std::vector<std::pair<double, double>> scores(probes.size() * gallery.size());
  parallel_for(probes.size(), [&](size_t pi) {
    for (size_t gi = 0; gi < gallery.size(); ++gi) {
      scores[pi * gallery.size() + gi] = {
          match_score(probe_templates[pi], gallery[gi], Method::kConcat, Metric::kEuclidean,
                      config.match),
          match_score(probe_templates[pi], gallery[gi], Method::kDs, Metric::kEuclidean,
                      config.match)};
    }
  });
  for (size_t pi = 0; pi < probes.size(); ++pi)
    for (size_t gi = 0; gi < gallery.size(); ++gi) {
      const bool is_genuine = probes[pi].subject == gallery[gi].subject_id;
      const auto& [cs, ds] = scores[pi * gallery.size() + gi];
      (is_genuine ? genuine_concat : impostor_concat).push_back(cs);
      (is_genuine ? genuine_ds : impostor_ds).push_back(ds);
    }

  if (genuine_concat.size() < 10 || impostor_concat.size() < 10)
    throw std::runtime_error("too few calibration pairs (need >= 10 genuine and >= 10 impostor)");

  auto calibrated = [](const std::vector<double>& gen, const std::vector<double>& imp,
                       double* eer_out) {
    double t = 0.0;
    *eer_out = equal_error_rate(gen, imp, &t);
    // nudge into the open gap above the EER threshold when one exists
    double next = kInf;
    for (double s : gen)
      if (s > t) next = std::min(next, s);
    for (double s : imp)
      if (s > t) next = std::min(next, s);
    if (std::isfinite(next)) return 0.5 * (t + next);
    return t + std::max(0.1, 0.1 * std::abs(t));
  };

  CalibrationResult res;
  res.psi = calibrated(genuine_concat, impostor_concat, &res.psi_eer);
  res.phi = calibrated(genuine_ds, impostor_ds, &res.phi_eer);
  if (result) *result = res;

  out << "psi " << fmt_score(res.psi) << " (concat EER " << fmt_score(res.psi_eer) << ")\n";
  out << "phi " << fmt_score(res.phi) << " (DS EER " << fmt_score(res.phi_eer) << ")\n";
  if (res.psi_eer >= 0.45 || res.phi_eer >= 0.45)
    out << "warning: calibration distributions are nearly indistinguishable\n";
  return 0;
}

}  // namespace earlock
