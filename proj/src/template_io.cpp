#include "earlock/template_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace earlock {

namespace {

std::string take_line(std::istringstream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("template: truncated at " + what);
  return line;
}

void expect_prefix(const std::string& line, const std::string& prefix, const std::string& what) {
  if (line.rfind(prefix, 0) != 0)
    throw std::runtime_error("template: expected " + what + ", got '" + line + "'");
}

}  // namespace

std::string serialize_template(const Template& t) {
  t.validate();
  std::ostringstream out;
  out << "EARTPL v1\n";
  out << "subject " << t.subject_id << "\n";
  out << "created " << (t.created_at.empty() ? "-" : t.created_at) << "\n";
  out << "begin gmm\n" << serialize_gmm(t.color_model) << "end gmm\n";

  out << "slices " << t.slice_components.size() << "\n";
  for (size_t i = 0; i < t.slice_components.size(); ++i)
    out << "slice " << i << " component " << t.slice_components[i] << "\n";

  auto section = [&](const std::string& name, const FeatureSet& fs) {
    out << "begin features " << name << " " << fs.features.size() << "\n";
    out << dump_features(fs.features);
    out << "end features\n";
  };
  section("whole", t.whole_features);
  section("concat", t.concat_features);
  for (size_t i = 0; i < t.per_slice_features.size(); ++i)
    section("slice " + std::to_string(i), t.per_slice_features[i]);
  return out.str();
}

Template parse_template(const std::string& text) {
  std::istringstream in(text);
  Template t;

  expect_prefix(take_line(in, "magic"), "EARTPL v1", "EARTPL v1 header");
  {
    const std::string line = take_line(in, "subject");
    expect_prefix(line, "subject ", "subject line");
    t.subject_id = line.substr(8);
  }
  {
    const std::string line = take_line(in, "created");
    expect_prefix(line, "created ", "created line");
    t.created_at = line.substr(8);
    if (t.created_at == "-") t.created_at.clear();
  }

  expect_prefix(take_line(in, "gmm"), "begin gmm", "gmm section");
  std::string gmm_text;
  for (std::string line = take_line(in, "gmm body"); line != "end gmm";
       line = take_line(in, "gmm body"))
    gmm_text += line + "\n";
  t.color_model = parse_gmm(gmm_text);

  size_t slice_count = 0;
  {
    const std::string line = take_line(in, "slices");
    expect_prefix(line, "slices ", "slices line");
    slice_count = std::stoul(line.substr(7));
  }
  t.slice_components.resize(slice_count);
  for (size_t i = 0; i < slice_count; ++i) {
    std::istringstream ls(take_line(in, "slice line"));
    std::string tag, comp_tag;
    size_t idx = 0;
    int component = 0;
    if (!(ls >> tag >> idx >> comp_tag >> component) || tag != "slice" || comp_tag != "component" ||
        idx != i)
      throw std::runtime_error("template: malformed slice line");
    if (component < 0 || component >= t.color_model.size())
      throw std::runtime_error("template: slice component out of range");
    t.slice_components[i] = component;
    t.slice_gaussians.push_back(t.color_model.components[component].gaussian);
  }

  auto read_section = [&](const std::string& expected_name) {
    const std::string line = take_line(in, "features header");
    expect_prefix(line, "begin features " + expected_name + " ", "features " + expected_name);
    const size_t count = std::stoul(line.substr(15 + expected_name.size() + 1));
    std::string body;
    for (std::string l = take_line(in, "features body"); l != "end features";
         l = take_line(in, "features body"))
      body += l + "\n";
    FeatureSet fs;
    fs.features = parse_features(body);
    if (fs.features.size() != count)
      throw std::runtime_error("template: feature count mismatch in " + expected_name);
    return fs;
  };

  t.whole_features = read_section("whole");
  t.whole_features.source = kAugmentedSource;
  t.concat_features = read_section("concat");
  t.concat_features.source = kAugmentedSource;
  for (size_t i = 0; i < slice_count; ++i) {
    t.per_slice_features.push_back(read_section("slice " + std::to_string(i)));
    t.per_slice_features.back().source = static_cast<int>(i);
  }
  t.validate();
  return t;
}

void save_template(const Template& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << serialize_template(t);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Template load_template(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing template file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_template(buf.str());
}

}  // namespace earlock
