#include "cssl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cssl/rng.hpp"

namespace fs = std::filesystem;

namespace cssl {

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {
  for (const auto& s : samples_) {
    const std::size_t v = s.connectome.nodes();
    if (nodes_ == 0) nodes_ = v;
    if (v != nodes_) {
      throw DataError("mixed node counts in dataset: " + std::to_string(nodes_) + " and " +
                      std::to_string(v) + " (subject " + s.subject_id + ")");
    }
    if (s.label && *s.label != 0 && *s.label != 1) {
      throw DataError("label outside {0,1} for subject " + s.subject_id);
    }
  }
}

bool Dataset::fully_labeled() const {
  return std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return s.label.has_value(); });
}

std::size_t Dataset::count_label(Label l) const {
  return static_cast<std::size_t>(std::count_if(samples_.begin(), samples_.end(),
                                                [l](const Sample& s) { return s.label == l; }));
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples_.at(i));
  return Dataset(std::move(out));
}

// ---------------------------------------------------------------- CSV helpers

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& path) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw DataError("malformed number '" + s + "' in " + path.string());
  }
  return v;
}

std::size_t parse_count(const std::string& s, const fs::path& path) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
    throw DataError("malformed header '" + s + "' in " + path.string());
  }
  return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

Tensor read_rows(const std::vector<std::string>& lines, std::size_t rows, std::size_t cols,
                 const fs::path& path) {
  if (lines.size() != rows + 1) {
    throw DataError("malformed matrix in " + path.string() + ": expected " + std::to_string(rows) +
                    " rows, found " + std::to_string(lines.size() - 1));
  }
  Tensor t({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto fields = split_fields(lines[r + 1]);
    if (fields.size() != cols) {
      throw DataError("malformed matrix in " + path.string() + ": row " + std::to_string(r) +
                      " has " + std::to_string(fields.size()) + " values, expected " +
                      std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = parse_double(fields[c], path);
  }
  return t;
}

void write_rows(std::ostream& out, const Tensor& t) {
  char buf[32];
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

constexpr std::string_view kConnSuffix = ".conn.csv";
constexpr std::string_view kTsSuffix = ".ts.csv";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Connectome read_connectome_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError("malformed matrix in " + path.string() + ": empty file");
  const auto header = split_fields(lines[0]);
  if (header.size() != 1) throw DataError("malformed matrix header in " + path.string());
  const std::size_t v = parse_count(header[0], path);
  return Connectome::from_matrix(read_rows(lines, v, v, path), 1e-6);
}

TimeSeries read_time_series_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError("malformed matrix in " + path.string() + ": empty file");
  const auto header = split_fields(lines[0]);
  if (header.size() != 2) throw DataError("malformed time-series header in " + path.string());
  const std::size_t len = parse_count(header[0], path);
  const std::size_t v = parse_count(header[1], path);
  return TimeSeries(read_rows(lines, len, v, path));
}

void write_connectome_csv(const fs::path& path, const Connectome& c) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << c.nodes() << '\n';
  write_rows(out, c.matrix());
}

void write_time_series_csv(const fs::path& path, const TimeSeries& ts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << ts.length() << ',' << ts.regions() << '\n';
  write_rows(out, ts.values());
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());

  std::vector<std::pair<std::string, std::optional<Label>>> subjects;
  const fs::path labels_path = dir / "labels.csv";
  if (fs::exists(labels_path)) {
    const auto lines = read_lines(labels_path);
    if (lines.empty() || split_fields(lines[0]) != std::vector<std::string>{"subject_id", "label"}) {
      throw DataError("labels.csv must start with header 'subject_id,label'");
    }
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split_fields(lines[i]);
      if (f.size() != 2 || f[0].empty()) {
        throw DataError("malformed labels.csv line " + std::to_string(i + 1));
      }
      if (!seen.insert(f[0]).second) throw DataError("duplicate subject id " + f[0]);
      std::optional<Label> label;
      if (!f[1].empty()) {
        if (f[1] != "0" && f[1] != "1") {
          throw DataError("label outside {0,1} for subject " + f[0] + ": '" + f[1] + "'");
        }
        label = f[1] == "1" ? 1 : 0;
      }
      subjects.emplace_back(f[0], label);
    }
  } else {
    std::set<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (ends_with(name, kConnSuffix)) ids.insert(name.substr(0, name.size() - kConnSuffix.size()));
      if (ends_with(name, kTsSuffix)) ids.insert(name.substr(0, name.size() - kTsSuffix.size()));
    }
    for (const auto& id : ids) subjects.emplace_back(id, std::nullopt);
  }

  std::vector<Sample> samples;
  samples.reserve(subjects.size());
  for (const auto& [id, label] : subjects) {
    const fs::path conn = dir / (id + std::string(kConnSuffix));
    const fs::path ts = dir / (id + std::string(kTsSuffix));
    std::optional<TimeSeries> series;
    if (fs::exists(ts)) series = read_time_series_csv(ts);
    if (fs::exists(conn)) {
      samples.push_back(Sample{id, read_connectome_csv(conn), label, std::move(series)});
    } else if (series) {
      Connectome c = pearson_connectome(*series);
      samples.push_back(Sample{id, std::move(c), label, std::move(series)});
    } else {
      throw DataError("no matrix or time-series file for subject " + id);
    }
  }
  return Dataset(std::move(samples));
}

void write_dataset(const fs::path& dir, const Dataset& ds, bool with_time_series) {
  fs::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw DataError("cannot write labels.csv in " + dir.string());
  labels << "subject_id,label\n";
  for (const auto& s : ds) {
    labels << s.subject_id << ',';
    if (s.label) labels << *s.label;
    labels << '\n';
    write_connectome_csv(dir / (s.subject_id + std::string(kConnSuffix)), s.connectome);
    if (with_time_series && s.time_series) {
      write_time_series_csv(dir / (s.subject_id + std::string(kTsSuffix)), *s.time_series);
    }
  }
}

// ---------------------------------------------------------------- synthetic

Dataset synth_dataset(std::size_t n, std::size_t nodes, std::size_t length, const ClassSpec& spec,
                      std::uint64_t seed) {
  if (n == 0 || nodes == 0 || length == 0) {
    throw std::invalid_argument("synth_dataset: n, nodes and length must be positive");
  }
  if (spec.blocks == 0 || spec.blocks > nodes) {
    throw std::invalid_argument("synth_dataset: blocks must be in [1, nodes]");
  }
  if (spec.separation < 0.0 || spec.noise < 0.0 || spec.jitter < 0.0) {
    throw std::invalid_argument("synth_dataset: separation, noise and jitter must be >= 0");
  }
  if (spec.blocks < 2 && spec.separation > 0.0) {
    throw std::invalid_argument(
        "synth_dataset: class templates are identical with fewer than 2 blocks; "
        "separation > 0 cannot be realized");
  }

  std::vector<std::size_t> block_of(nodes);
  for (std::size_t v = 0; v < nodes; ++v) block_of[v] = v * spec.blocks / nodes;

  // Balanced labels in a seeded order; each subject draws from its own stream.
  Rng rng(seed);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<Label>(i % 2);
  rng.shuffle(labels);

  const std::size_t width = std::max<std::size_t>(4, std::to_string(n).size());
  std::vector<Sample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng srng = rng.fork(i);
    const double coupling = labels[i] == 1 ? spec.separation : 0.0;
    const double strength = spec.block_weight * (1.0 + spec.jitter * srng.normal());

    Tensor x({length, nodes});
    std::vector<double> factor(spec.blocks);
    for (std::size_t t = 0; t < length; ++t) {
      const double g = srng.normal();
      for (auto& f : factor) f = srng.normal();
      for (std::size_t v = 0; v < nodes; ++v) {
        const std::size_t b = block_of[v];
        double value = spec.global_weight * g + strength * factor[b] + spec.noise * srng.normal();
        if (b < 2 && spec.blocks >= 2) value += coupling * factor[1 - b];
        x(t, v) = value;
      }
    }
    std::string id = std::to_string(i);
    id.insert(0, width - std::min(width, id.size()), '0');
    id.insert(0, "synth_");
    TimeSeries ts(std::move(x));
    Connectome c = pearson_connectome(ts);
    samples.push_back(Sample{id, std::move(c), labels[i], std::move(ts)});
  }
  return Dataset(std::move(samples));
}

// ---------------------------------------------------------------- split

Split stratified_split(const Dataset& ds, const SplitSpec& spec) {
  const double fr[3] = {spec.train, spec.val, spec.test};
  for (double f : fr) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
  }
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  if (!ds.fully_labeled()) throw DataError("stratified_split requires every sample to be labeled");

  std::map<Label, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[*ds[i].label].push_back(i);
  for (const auto& [label, members] : by_class) {
    if (members.size() < 3) {
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                      " samples; stratified splitting needs at least 3");
    }
  }

  Rng rng(spec.seed);
  Split out;
  std::vector<std::size_t>* parts[3] = {&out.train, &out.val, &out.test};
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    const double n = static_cast<double>(members.size());
    std::size_t counts[3];
    double rem[3];
    std::size_t assigned = 0;
    for (int p = 0; p < 3; ++p) {
      const double exact = fr[p] * n;
      counts[p] = static_cast<std::size_t>(std::floor(exact));
      rem[p] = exact - std::floor(exact);
      assigned += counts[p];
    }
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < members.size(); ++k, ++assigned) ++counts[order[k % 3]];

    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t k = 0; k < counts[p]; ++k) parts[p]->push_back(members[pos++]);
    }
  }
  for (auto* part : parts) std::sort(part->begin(), part->end());
  return out;
}

}  // namespace cssl
