#include "cssl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cssl {

namespace {

std::string show(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto r = std::from_chars(text.data(), end, value);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("config: bad value for " + key + ": '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + text + "'");
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& full_key, const std::string&)> set;
};

template <class Member>
Field size_field(const char* s, const char* k, Member member) {
  return {s, k, [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, const std::string& key, const std::string& v) {
            member(c) = parse_number<std::size_t>(key, v);
          }};
}

template <class Member>
Field u64_field(const char* s, const char* k, Member member) {
  return {s, k, [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, const std::string& key, const std::string& v) {
            member(c) = parse_number<std::uint64_t>(key, v);
          }};
}

template <class Member>
Field double_field(const char* s, const char* k, Member member) {
  return {s, k, [member](const RunConfig& c) { return show(member(c)); },
          [member](RunConfig& c, const std::string& key, const std::string& v) {
            member(c) = parse_number<double>(key, v);
          }};
}

template <class Member>
Field bool_field(const char* s, const char* k, Member member) {
  return {s, k, [member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); },
          [member](RunConfig& c, const std::string& key, const std::string& v) { member(c) = parse_bool(key, v); }};
}

template <class Member>
Field string_field(const char* s, const char* k, Member member) {
  return {s, k, [member](const RunConfig& c) { return member(c); },
          [member](RunConfig& c, const std::string&, const std::string& v) { member(c) = v; }};
}

#define CSSL_REF(expr) [](auto& c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("data", "source", CSSL_REF(c.data.source)),
      string_field("data", "path", CSSL_REF(c.data.path)),
      size_field("data", "n", CSSL_REF(c.data.n)),
      size_field("data", "nodes", CSSL_REF(c.data.nodes)),
      size_field("data", "length", CSSL_REF(c.data.length)),
      size_field("data", "blocks", CSSL_REF(c.data.classes.blocks)),
      double_field("data", "separation", CSSL_REF(c.data.classes.separation)),
      double_field("data", "global_weight", CSSL_REF(c.data.classes.global_weight)),
      double_field("data", "block_weight", CSSL_REF(c.data.classes.block_weight)),
      double_field("data", "noise", CSSL_REF(c.data.classes.noise)),
      double_field("data", "jitter", CSSL_REF(c.data.classes.jitter)),
      u64_field("data", "seed", CSSL_REF(c.data.seed)),

      size_field("model", "nodes", CSSL_REF(c.experiment.model.nodes)),
      size_field("model", "layers", CSSL_REF(c.experiment.model.layers)),
      size_field("model", "heads", CSSL_REF(c.experiment.model.heads)),
      size_field("model", "d_model", CSSL_REF(c.experiment.model.d_model)),
      size_field("model", "ff_dim", CSSL_REF(c.experiment.model.ff_dim)),
      size_field("model", "clusters", CSSL_REF(c.experiment.model.clusters)),
      size_field("model", "d_out", CSSL_REF(c.experiment.model.d_out)),
      size_field("model", "proj_dim", CSSL_REF(c.experiment.model.proj_dim)),
      double_field("model", "ff_slope", CSSL_REF(c.experiment.model.ff_slope)),
      double_field("model", "head_slope", CSSL_REF(c.experiment.model.head_slope)),
      double_field("model", "ln_eps", CSSL_REF(c.experiment.model.ln_eps)),

      size_field("augment", "k_min", CSSL_REF(c.experiment.pretrain.augment.k_min)),
      size_field("augment", "k_max", CSSL_REF(c.experiment.pretrain.augment.k_max)),
      double_field("augment", "delta_max", CSSL_REF(c.experiment.pretrain.augment.delta_max)),
      {"augment", "noise", [](const RunConfig& c) { return c.experiment.pretrain.augment.noise.to_string(); },
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.experiment.pretrain.augment.noise = NoiseSpec::parse(v);
       }},

      size_field("moco", "queue", CSSL_REF(c.experiment.pretrain.moco.queue_size)),
      double_field("moco", "momentum", CSSL_REF(c.experiment.pretrain.moco.momentum)),
      double_field("moco", "tau", CSSL_REF(c.experiment.pretrain.moco.tau)),

      bool_field("pretrain", "enabled", CSSL_REF(c.experiment.use_pretraining)),
      bool_field("pretrain", "strict", CSSL_REF(c.experiment.strict)),
      size_field("pretrain", "epochs", CSSL_REF(c.experiment.pretrain.epochs)),
      double_field("pretrain", "lr", CSSL_REF(c.experiment.pretrain.lr)),
      double_field("pretrain", "weight_decay", CSSL_REF(c.experiment.pretrain.weight_decay)),
      size_field("pretrain", "batch", CSSL_REF(c.experiment.pretrain.batch)),

      size_field("finetune", "epochs", CSSL_REF(c.experiment.finetune.epochs)),
      double_field("finetune", "lr", CSSL_REF(c.experiment.finetune.lr)),
      double_field("finetune", "weight_decay", CSSL_REF(c.experiment.finetune.weight_decay)),
      size_field("finetune", "batch", CSSL_REF(c.experiment.finetune.batch)),
      size_field("finetune", "repeats", CSSL_REF(c.experiment.finetune.repeats)),
      bool_field("finetune", "linear_probe", CSSL_REF(c.experiment.finetune.linear_probe)),

      double_field("split", "train", CSSL_REF(c.experiment.finetune.split.train)),
      double_field("split", "val", CSSL_REF(c.experiment.finetune.split.val)),
      double_field("split", "test", CSSL_REF(c.experiment.finetune.split.test)),

      u64_field("run", "seed", CSSL_REF(c.experiment.seed)),
  };
  return table;
}

#undef CSSL_REF

std::string format_sections(const RunConfig& cfg, bool with_data) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (!with_data && std::string(f.section) == "data") continue;
    if (section != f.section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw std::invalid_argument("config: key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      bool found = false;
      for (const auto& f : fields()) {
        if (section == f.section && key == f.key) {
          f.set(cfg, full, value.data());
          found = true;
          break;
        }
      }
      if (!found) throw std::invalid_argument("config: unknown key '" + full + "'");
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  return parse_config(in);
}

std::string format_config(const RunConfig& cfg) { return format_sections(cfg, true); }

std::string format_experiment_config(const ExperimentConfig& cfg) {
  RunConfig rc;
  rc.experiment = cfg;
  return format_sections(rc, false);
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset load_data(const DataConfig& cfg) {
  if (cfg.source == "synth") return synth_dataset(cfg.n, cfg.nodes, cfg.length, cfg.classes, cfg.seed);
  if (cfg.source == "dir") {
    if (cfg.path.empty()) throw std::invalid_argument("config: data.path is required when data.source = dir");
    return load_dataset(cfg.path);
  }
  throw std::invalid_argument("config: data.source must be 'synth' or 'dir', got '" + cfg.source + "'");
}

}  // namespace cssl
