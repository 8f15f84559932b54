#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mmt/corpus.hpp"
#include "mmt/evaluation.hpp"
#include "mmt/filters.hpp"
#include "mmt/model.hpp"
#include "mmt/querygen.hpp"
#include "mmt/retrieval.hpp"
#include "mmt/trainer.hpp"

namespace mmt::experiment {

enum class Condition {
  text_only,
  random_images,
  blank_images,
  retrieved_images,
  image_filter,
  region_filter,
  both_filters,
  supplementary_text,
  visual_and_text,
};

inline const std::vector<std::pair<std::string, Condition>>& condition_names() {
  static const std::vector<std::pair<std::string, Condition>> names = {
      {"text_only", Condition::text_only},
      {"random_images", Condition::random_images},
      {"blank_images", Condition::blank_images},
      {"retrieved_images", Condition::retrieved_images},
      {"image_filter", Condition::image_filter},
      {"region_filter", Condition::region_filter},
      {"both_filters", Condition::both_filters},
      {"supplementary_text", Condition::supplementary_text},
      {"visual_and_text", Condition::visual_and_text},
  };
  return names;
}

inline Condition condition_from_string(const std::string& name) {
  for (const auto& [n, c] : condition_names())
    if (n == name) return c;
  std::string known;
  for (const auto& [n, c] : condition_names()) known += n + " ";
  throw ConfigError("condition: unknown value '" + name + "' (known: " + known + ")");
}

inline std::string condition_to_string(Condition c) {
  for (const auto& [n, cc] : condition_names())
    if (cc == c) return n;
  return "?";
}

struct ExperimentConfig {
  std::string condition;  // empty until set; validated against the list above
  std::string train_source, train_target;
  std::string dev_source, dev_target;
  std::string test_source, test_target;
  std::string stopwords;

  std::string image_backend = "local_index";  // local_index | fixture
  std::string manifest;
  std::string feature_store;
  std::string fixture_dir;
  std::string text_store;
  std::string score_table;
  std::string scorer = "cosine";              // cosine | fixture
  std::string region_provider = "grid_slices";  // grid_slices | fixture
  std::string region_fixture_dir;
  std::uint64_t backend_seed = 13;

  int embed_dim = 128;
  int hidden_dim = 256;
  int visual_dim = 1024;
  int visual_len = 196;
  int key_dim = 256;
  int region_score_dim = 256;
  int m = 5;        // M, queries/images per sentence
  int m_prime = 10; // M', candidates before the image filter
  int o = 128;      // O, regions per image and regions kept

  int min_freq = 1;
  int max_decode_len = 50;
  long max_updates = 0;  // 0 = no cap
  training::TrainConfig train;
  bool freeze_region_params = false;
  std::string precision = "float64";  // float32 | float64
  std::string output_dir = "runs/default";
};

// ---- schema-driven parsing ----------------------------------------------------

struct ConfigKey {
  std::string name;
  std::string description;
  std::function<void(ExperimentConfig&, const std::string&)> apply;
  std::function<std::string(const ExperimentConfig&)> render;
};

namespace detail {

inline int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

inline long to_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

inline double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

inline std::vector<std::uint64_t> to_seeds(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      seeds.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected comma-separated integers, got '" + value + "'");
    }
  }
  if (seeds.empty()) throw ConfigError(key + ": no seeds given");
  return seeds;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace detail

#define MMT_CONFIG_STR(field, desc)                                             \
  ConfigKey{#field, desc,                                                       \
            [](ExperimentConfig& c, const std::string& v) { c.field = v; },     \
            [](const ExperimentConfig& c) { return c.field; }}
#define MMT_CONFIG_INT(field, desc)                                             \
  ConfigKey{#field, desc,                                                       \
            [](ExperimentConfig& c, const std::string& v) {                     \
              c.field = detail::to_int(#field, v);                              \
            },                                                                  \
            [](const ExperimentConfig& c) { return std::to_string(c.field); }}

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      MMT_CONFIG_STR(condition, "experiment condition (required)"),
      MMT_CONFIG_STR(train_source, "training corpus, source side"),
      MMT_CONFIG_STR(train_target, "training corpus, target side"),
      MMT_CONFIG_STR(dev_source, "dev corpus, source side"),
      MMT_CONFIG_STR(dev_target, "dev corpus, target side"),
      MMT_CONFIG_STR(test_source, "test corpus, source side"),
      MMT_CONFIG_STR(test_target, "test corpus, target side"),
      MMT_CONFIG_STR(stopwords, "stopword list, one token per line"),
      MMT_CONFIG_STR(image_backend, "image backend: local_index | fixture"),
      MMT_CONFIG_STR(manifest, "retrieval manifest (JSON lines)"),
      MMT_CONFIG_STR(feature_store, "directory of <item>.mmtf feature files"),
      MMT_CONFIG_STR(fixture_dir, "directory of p<pair>_r<rank>.mmtf fixtures"),
      MMT_CONFIG_STR(text_store, "supplementary text store, one sentence per line"),
      MMT_CONFIG_STR(score_table, "fixture scorer table (JSON lines)"),
      MMT_CONFIG_STR(scorer, "image filter scorer: cosine | fixture"),
      MMT_CONFIG_STR(region_provider, "region provider: grid_slices | fixture"),
      MMT_CONFIG_STR(region_fixture_dir, "directory of <item>.regions.mmtf files"),
      ConfigKey{"backend_seed", "seed for the random image backend",
                [](ExperimentConfig& c, const std::string& v) {
                  c.backend_seed = static_cast<std::uint64_t>(detail::to_long("backend_seed", v));
                },
                [](const ExperimentConfig& c) { return std::to_string(c.backend_seed); }},
      MMT_CONFIG_INT(embed_dim, "word embedding size"),
      MMT_CONFIG_INT(hidden_dim, "recurrent hidden size per direction"),
      MMT_CONFIG_INT(visual_dim, "feature width D_v"),
      MMT_CONFIG_INT(visual_len, "feature rows L"),
      MMT_CONFIG_INT(key_dim, "fusion attention key size"),
      MMT_CONFIG_INT(region_score_dim, "region score hidden size"),
      ConfigKey{"M", "queries and kept images per sentence",
                [](ExperimentConfig& c, const std::string& v) { c.m = detail::to_int("M", v); },
                [](const ExperimentConfig& c) { return std::to_string(c.m); }},
      ConfigKey{"M_prime", "candidate images before the image filter",
                [](ExperimentConfig& c, const std::string& v) {
                  c.m_prime = detail::to_int("M_prime", v);
                },
                [](const ExperimentConfig& c) { return std::to_string(c.m_prime); }},
      ConfigKey{"O", "regions per image and regions kept by the filter",
                [](ExperimentConfig& c, const std::string& v) { c.o = detail::to_int("O", v); },
                [](const ExperimentConfig& c) { return std::to_string(c.o); }},
      MMT_CONFIG_INT(min_freq, "vocabulary frequency threshold"),
      MMT_CONFIG_INT(max_decode_len, "greedy decoding length cap"),
      ConfigKey{"max_updates", "stop after this many updates (0 = unlimited)",
                [](ExperimentConfig& c, const std::string& v) {
                  c.max_updates = detail::to_long("max_updates", v);
                },
                [](const ExperimentConfig& c) { return std::to_string(c.max_updates); }},
      ConfigKey{"batch_size", "sentences per update",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.batch_size = detail::to_int("batch_size", v);
                },
                [](const ExperimentConfig& c) { return std::to_string(c.train.batch_size); }},
      ConfigKey{"learning_rate", "Adam learning rate",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.learning_rate = detail::to_double("learning_rate", v);
                },
                [](const ExperimentConfig& c) {
                  std::ostringstream os;
                  os << c.train.learning_rate;
                  return os.str();
                }},
      ConfigKey{"dropout", "dropout rate",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.dropout = detail::to_double("dropout", v);
                },
                [](const ExperimentConfig& c) {
                  std::ostringstream os;
                  os << c.train.dropout;
                  return os.str();
                }},
      ConfigKey{"max_epochs", "epoch cap",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.max_epochs = detail::to_int("max_epochs", v);
                },
                [](const ExperimentConfig& c) { return std::to_string(c.train.max_epochs); }},
      ConfigKey{"patience", "early stopping patience, in epochs",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.patience = detail::to_int("patience", v);
                },
                [](const ExperimentConfig& c) { return std::to_string(c.train.patience); }},
      ConfigKey{"seeds", "comma-separated run seeds",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.seeds = detail::to_seeds("seeds", v);
                },
                [](const ExperimentConfig& c) {
                  std::string out;
                  for (std::size_t i = 0; i < c.train.seeds.size(); ++i) {
                    if (i) out += ",";
                    out += std::to_string(c.train.seeds[i]);
                  }
                  return out;
                }},
      ConfigKey{"beta1", "Adam beta1",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.beta1 = detail::to_double("beta1", v);
                },
                [](const ExperimentConfig& c) {
                  std::ostringstream os;
                  os << c.train.beta1;
                  return os.str();
                }},
      ConfigKey{"beta2", "Adam beta2",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.beta2 = detail::to_double("beta2", v);
                },
                [](const ExperimentConfig& c) {
                  std::ostringstream os;
                  os << c.train.beta2;
                  return os.str();
                }},
      ConfigKey{"epsilon", "Adam epsilon",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.epsilon = detail::to_double("epsilon", v);
                },
                [](const ExperimentConfig& c) {
                  std::ostringstream os;
                  os << c.train.epsilon;
                  return os.str();
                }},
      ConfigKey{"freeze_region_params", "exclude region filter params from training",
                [](ExperimentConfig& c, const std::string& v) {
                  c.freeze_region_params = detail::to_bool("freeze_region_params", v);
                },
                [](const ExperimentConfig& c) {
                  return c.freeze_region_params ? std::string("true") : std::string("false");
                }},
      MMT_CONFIG_STR(precision, "run precision: float32 | float64"),
      MMT_CONFIG_STR(output_dir, "directory for run outputs"),
  };
  return schema;
}

#undef MMT_CONFIG_STR
#undef MMT_CONFIG_INT

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_schema())
    if (k.name == name) return &k;
  return nullptr;
}

inline void apply_config_value(ExperimentConfig& cfg, const std::string& key,
                               const std::string& value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw ConfigError("unknown config key: " + key);
  k->apply(cfg, value);
}

/// key = value lines; blank lines and lines starting with # are skipped.
inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(trimmed.substr(0, eq));
    const std::string value = detail::trim(trimmed.substr(eq + 1));
    apply_config_value(cfg, key, value);
  }
  return cfg;
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.condition.empty()) throw ConfigError("condition missing");
  const Condition cond = condition_from_string(cfg.condition);
  cfg.train.validate();
  auto positive = [](const std::string& key, int v) {
    if (v < 1) throw ConfigError(key + ": must be >= 1");
  };
  positive("embed_dim", cfg.embed_dim);
  positive("hidden_dim", cfg.hidden_dim);
  positive("visual_dim", cfg.visual_dim);
  positive("visual_len", cfg.visual_len);
  positive("key_dim", cfg.key_dim);
  positive("region_score_dim", cfg.region_score_dim);
  positive("M", cfg.m);
  positive("M_prime", cfg.m_prime);
  positive("O", cfg.o);
  positive("min_freq", cfg.min_freq);
  positive("max_decode_len", cfg.max_decode_len);
  if (cfg.precision != "float32" && cfg.precision != "float64")
    throw ConfigError("precision: must be float32 or float64");
  if (cfg.image_backend != "local_index" && cfg.image_backend != "fixture")
    throw ConfigError("image_backend: must be local_index or fixture");
  if (cfg.scorer != "cosine" && cfg.scorer != "fixture")
    throw ConfigError("scorer: must be cosine or fixture");
  if (cfg.region_provider != "grid_slices" && cfg.region_provider != "fixture")
    throw ConfigError("region_provider: must be grid_slices or fixture");
  if ((cond == Condition::image_filter || cond == Condition::both_filters) &&
      cfg.m_prime < cfg.m)
    throw ConfigError("M_prime: must be >= M when the image filter is enabled (M_prime = " +
                      std::to_string(cfg.m_prime) + ", M = " + std::to_string(cfg.m) + ")");
  if ((cond == Condition::region_filter || cond == Condition::both_filters) &&
      cfg.region_provider == "grid_slices" && cfg.o > cfg.visual_len)
    throw ConfigError("O: grid_slices provider needs O <= visual_len");
}

// ---- condition wiring ------------------------------------------------------------

/// Run-wide retrieval resources, loaded once.
struct Resources {
  Condition condition = Condition::text_only;
  std::optional<retrieval::RetrievalManifest> manifest;
  std::optional<retrieval::TextStore> texts;
  std::shared_ptr<filters::SimilarityScorer> scorer;
  filters::FixtureScorer* fixture_scorer = nullptr;  // non-owning view for set_pair
  retrieval::RegionProviderConfig region_provider;
  querygen::StopwordSet stopwords;
  querygen::IdfTable idf;
};

inline Resources load_resources(const ExperimentConfig& cfg,
                                const corpus::CorpusSplit& idf_split) {
  Resources res;
  res.condition = condition_from_string(cfg.condition);
  if (!cfg.stopwords.empty()) res.stopwords = querygen::load_stopwords(cfg.stopwords);
  res.idf = querygen::compute_idf(idf_split);

  const bool wants_retrieved = res.condition == Condition::retrieved_images ||
                               res.condition == Condition::image_filter ||
                               res.condition == Condition::region_filter ||
                               res.condition == Condition::both_filters ||
                               res.condition == Condition::visual_and_text;
  const bool wants_store = res.condition == Condition::random_images ||
                           (wants_retrieved && cfg.image_backend == "local_index");
  if (wants_store) {
    if (cfg.manifest.empty())
      throw ConfigError("manifest: required for condition " + cfg.condition);
    res.manifest = retrieval::RetrievalManifest::load(cfg.manifest, cfg.feature_store);
  }
  if (res.condition == Condition::supplementary_text ||
      res.condition == Condition::visual_and_text) {
    if (cfg.text_store.empty())
      throw ConfigError("text_store: required for condition " + cfg.condition);
    res.texts = retrieval::TextStore::load(cfg.text_store);
  }
  if (res.condition == Condition::image_filter || res.condition == Condition::both_filters) {
    if (cfg.scorer == "fixture") {
      if (cfg.score_table.empty())
        throw ConfigError("score_table: required for the fixture scorer");
      auto fixture = std::make_shared<filters::FixtureScorer>(
          filters::FixtureScorer::load(cfg.score_table));
      res.fixture_scorer = fixture.get();
      res.scorer = fixture;
    } else {
      res.scorer = std::make_shared<filters::CosineScorer>(cfg.visual_dim, 2 * cfg.hidden_dim,
                                                           cfg.backend_seed);
    }
  }
  if (res.condition == Condition::region_filter || res.condition == Condition::both_filters) {
    res.region_provider.kind = cfg.region_provider == "fixture"
                                   ? retrieval::RegionProviderConfig::Kind::fixture
                                   : retrieval::RegionProviderConfig::Kind::grid_slices;
    res.region_provider.fixture_dir = cfg.region_fixture_dir;
  }
  return res;
}

inline retrieval::BackendConfig image_backend_for(const ExperimentConfig& cfg,
                                                  const Resources& res) {
  retrieval::BackendConfig backend;
  backend.grid_rows = cfg.visual_len;
  backend.grid_cols = cfg.visual_dim;
  switch (res.condition) {
    case Condition::blank_images:
      backend.kind = retrieval::BackendConfig::Kind::blank;
      break;
    case Condition::random_images:
      backend.kind = retrieval::BackendConfig::Kind::random;
      backend.seed = cfg.backend_seed;
      backend.manifest = res.manifest;
      break;
    default:
      if (cfg.image_backend == "fixture") {
        backend.kind = retrieval::BackendConfig::Kind::fixture;
        backend.fixture_dir = cfg.fixture_dir;
      } else {
        backend.kind = retrieval::BackendConfig::Kind::local_index;
        backend.manifest = res.manifest;
      }
      break;
  }
  return backend;
}

template <class S>
std::vector<querygen::SearchQuery> queries_for(const Resources& res,
                                               const corpus::SentencePair& pair, int m) {
  auto keywords = querygen::extract_keywords(pair.source_tokens, res.idf, m, res.stopwords);
  return querygen::generate_queries(keywords, m, pair.source_tokens);
}

/// Build the per-sentence visual/supplementary context for one pair.
/// `pooled_fn` supplies the pooled text vector for score-based image
/// filtering; it is only invoked when the condition needs it.
template <class S>
model::VisualContext<S> prepare_context(
    const ExperimentConfig& cfg, const Resources& res, const corpus::SentencePair& pair,
    const std::function<Eigen::VectorXd(const corpus::SentencePair&)>& pooled_fn) {
  using Mode = typename model::VisualContext<S>::Mode;
  model::VisualContext<S> ctx;
  if (res.condition == Condition::text_only) {
    ctx.mode = Mode::none;
    return ctx;
  }

  auto queries = queries_for<S>(res, pair, cfg.m);
  retrieval::BackendConfig backend = image_backend_for(cfg, res);

  auto fetch_images = [&](int count) {
    return retrieval::retrieve_images(queries, count, backend, pair.pair_id);
  };
  auto filtered_images = [&]() {
    auto candidates = fetch_images(cfg.m_prime);
    if (res.fixture_scorer) res.fixture_scorer->set_pair(pair.pair_id);
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(2 * cfg.hidden_dim);
    if (cfg.scorer == "cosine") pooled = pooled_fn(pair);
    return filters::filter_images(candidates, pooled, cfg.m, *res.scorer);
  };
  auto to_grid_matrices = [](const std::vector<retrieval::ImageFeatureGrid>& grids) {
    std::vector<MatX<S>> out;
    out.reserve(grids.size());
    for (const auto& g : grids) out.push_back(g.values.template cast<S>());
    return out;
  };
  auto region_pool_of = [&](const std::vector<retrieval::ImageFeatureGrid>& images) {
    std::vector<model::VecX<S>> pool;
    for (const auto& img : images) {
      auto set = retrieval::extract_regions(img, cfg.o, res.region_provider);
      for (const auto& [id, vec] : set.regions) pool.push_back(vec.template cast<S>());
    }
    return pool;
  };

  switch (res.condition) {
    case Condition::blank_images:
    case Condition::random_images:
    case Condition::retrieved_images:
      ctx.mode = Mode::grids;
      ctx.grids = to_grid_matrices(fetch_images(cfg.m));
      break;
    case Condition::image_filter:
      ctx.mode = Mode::grids;
      ctx.grids = to_grid_matrices(filtered_images());
      break;
    case Condition::region_filter:
      ctx.mode = Mode::regions;
      ctx.region_pool = region_pool_of(fetch_images(cfg.m));
      break;
    case Condition::both_filters:
      ctx.mode = Mode::regions;
      ctx.region_pool = region_pool_of(filtered_images());
      break;
    case Condition::supplementary_text: {
      ctx.mode = Mode::texts;
      auto texts = retrieval::retrieve_supplementary_texts(queries, cfg.m, *res.texts);
      encoders::HashTextProvider provider(cfg.visual_dim);
      for (const auto& t : texts)
        ctx.text_features.push_back(encoders::pad_text_features<S>(
            provider.features(t.tokens).template cast<S>(), cfg.visual_len));
      break;
    }
    case Condition::visual_and_text: {
      ctx.mode = Mode::grids_and_texts;
      ctx.grids = to_grid_matrices(fetch_images(cfg.m));
      auto texts = retrieval::retrieve_supplementary_texts(queries, cfg.m, *res.texts);
      encoders::HashTextProvider provider(cfg.visual_dim);
      for (const auto& t : texts)
        ctx.text_features.push_back(encoders::pad_text_features<S>(
            provider.features(t.tokens).template cast<S>(), cfg.visual_len));
      break;
    }
    case Condition::text_only:
      break;
  }
  return ctx;
}

// ---- run manifest -------------------------------------------------------------------

struct SeedOutcome {
  std::uint64_t seed = 0;
  double test_bleu = 0.0;  // in [0, 1]
  double best_dev_bleu = 0.0;
  int best_epoch = 0;
  std::string checkpoint;
  std::string train_log;
  std::string hypotheses;
};

struct RunManifest {
  std::map<std::string, std::string> config;
  std::string condition;
  std::vector<SeedOutcome> seeds;
  double macro_average = 0.0;  // in [0, 1]
  std::map<std::string, double> wall_clock_seconds;

  void save(const std::string& path) const {
    nlohmann::json j;
    j["config"] = config;
    j["condition"] = condition;
    j["macro_average"] = macro_average;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["seeds"] = nlohmann::json::array();
    for (const auto& s : seeds) {
      nlohmann::json js;
      js["seed"] = s.seed;
      js["test_bleu"] = s.test_bleu;
      js["best_dev_bleu"] = s.best_dev_bleu;
      js["best_epoch"] = s.best_epoch;
      js["checkpoint"] = s.checkpoint;
      js["train_log"] = s.train_log;
      js["hypotheses"] = s.hypotheses;
      j["seeds"].push_back(js);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
  }

  static RunManifest load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ": corrupt run manifest: " + e.what());
    }
    RunManifest m;
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.condition = j.at("condition").get<std::string>();
    m.macro_average = j.at("macro_average").get<double>();
    if (j.contains("wall_clock_seconds"))
      m.wall_clock_seconds = j.at("wall_clock_seconds").get<std::map<std::string, double>>();
    for (const auto& js : j.at("seeds")) {
      SeedOutcome s;
      s.seed = js.at("seed").get<std::uint64_t>();
      s.test_bleu = js.at("test_bleu").get<double>();
      s.best_dev_bleu = js.at("best_dev_bleu").get<double>();
      s.best_epoch = js.at("best_epoch").get<int>();
      s.checkpoint = js.at("checkpoint").get<std::string>();
      s.train_log = js.at("train_log").get<std::string>();
      s.hypotheses = js.at("hypotheses").get<std::string>();
      m.seeds.push_back(std::move(s));
    }
    return m;
  }
};

inline std::map<std::string, std::string> config_snapshot(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> snap;
  for (const auto& key : config_schema()) snap[key.name] = key.render(cfg);
  return snap;
}

/// Paper-style comparison table: one row per condition, scores scaled to 100.
inline void render_table(std::ostream& out,
                         const std::vector<std::pair<std::string, double>>& rows) {
  std::size_t width = std::string("Method").size();
  for (const auto& [name, score] : rows) width = std::max(width, name.size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << "Method" << "BLEU\n";
  for (const auto& [name, score] : rows) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << name << std::fixed
        << std::setprecision(2) << 100.0 * score << '\n';
  }
  out.unsetf(std::ios::fixed);
}

// ---- experiment runner ------------------------------------------------------------

template <class S>
struct PreparedSplit {
  corpus::CorpusSplit split;
  std::vector<model::VisualContext<S>> contexts;
};

template <class S>
RunManifest run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  namespace fs = std::filesystem;
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [](auto from) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
  };

  RunManifest manifest;
  manifest.config = config_snapshot(cfg);
  manifest.condition = cfg.condition;
  fs::create_directories(cfg.output_dir);

  auto train_split = corpus::load_parallel_corpus(cfg.train_source, cfg.train_target, "train");
  auto dev_split = corpus::load_parallel_corpus(cfg.dev_source, cfg.dev_target, "dev");
  auto test_split = corpus::load_parallel_corpus(cfg.test_source, cfg.test_target, "test");

  auto source_vocab = corpus::build_vocabulary(train_split, corpus::Side::source, cfg.min_freq);
  auto target_vocab = corpus::build_vocabulary(train_split, corpus::Side::target, cfg.min_freq);
  source_vocab.save_tsv(cfg.output_dir + "/vocab_source.tsv");
  target_vocab.save_tsv(cfg.output_dir + "/vocab_target.tsv");
  manifest.wall_clock_seconds["load"] = elapsed(t_start);

  const auto t_resources = std::chrono::steady_clock::now();
  Resources res = load_resources(cfg, train_split);

  {
    std::ofstream qdump(cfg.output_dir + "/queries.jsonl", std::ios::binary);
    for (const auto& pair : train_split.pairs)
      querygen::dump_queries(qdump, pair.pair_id, queries_for<S>(res, pair, cfg.m));
  }

  model::ModelDims dims;
  dims.source_vocab = source_vocab.size();
  dims.target_vocab = target_vocab.size();
  dims.embed_dim = cfg.embed_dim;
  dims.hidden_dim = cfg.hidden_dim;
  dims.visual_dim = cfg.visual_dim;
  dims.visual_len = cfg.visual_len;
  dims.key_dim = cfg.key_dim;
  dims.region_score_dim = cfg.region_score_dim;
  dims.region_keep = cfg.o;
  manifest.wall_clock_seconds["resources"] = elapsed(t_resources);

  std::vector<evaluation::BleuReport> per_seed_reports;
  double context_seconds = 0.0, train_seconds = 0.0, decode_seconds = 0.0;

  for (std::uint64_t seed : cfg.train.seeds) {
    model::Model<S> m(dims, cfg.freeze_region_params);

    // Image filtering with the cosine scorer pools text with this seed's
    // initial parameters; train_model repeats the same initialization.
    Rng init_rng(mix_seed(seed, 0x1217ULL));
    m.store().init_uniform(init_rng, S(-0.1), S(0.1));
    auto pooled_fn = [&](const corpus::SentencePair& pair) {
      Tape<S> tape;
      auto ids = corpus::encode_tokens(pair.source_tokens, source_vocab, false);
      auto enc = encoders::encode_text(tape, ids, m.encoder_params());
      auto pooled = encoders::pool_text(tape, enc);
      return pooled.value().col(0).template cast<double>().eval();
    };

    const auto t_ctx = std::chrono::steady_clock::now();
    auto contexts_of = [&](const corpus::CorpusSplit& split) {
      std::vector<model::VisualContext<S>> contexts;
      contexts.reserve(split.pairs.size());
      for (const auto& pair : split.pairs)
        contexts.push_back(prepare_context<S>(cfg, res, pair, pooled_fn));
      return contexts;
    };
    auto train_contexts = contexts_of(train_split);
    auto dev_contexts = contexts_of(dev_split);
    auto test_contexts = contexts_of(test_split);
    context_seconds += elapsed(t_ctx);

    training::TrainData<S> train_data{&train_split, &source_vocab, &target_vocab,
                                      &train_contexts};
    training::TrainData<S> dev_data{&dev_split, &source_vocab, &target_vocab, &dev_contexts};

    const auto t_train = std::chrono::steady_clock::now();
    auto trained = training::train_model(m, train_data, dev_data, cfg.train, seed,
                                         cfg.max_decode_len, {}, cfg.max_updates);
    train_seconds += elapsed(t_train);
    m.store().restore_values(trained.best_values);

    const auto t_decode = std::chrono::steady_clock::now();
    std::vector<std::vector<std::string>> hyps, refs;
    for (std::size_t i = 0; i < test_split.pairs.size(); ++i) {
      Tape<S> tape;
      auto src = corpus::encode_tokens(test_split.pairs[i].source_tokens, source_vocab, false);
      auto ids = m.translate(tape, src, test_contexts[i], cfg.max_decode_len);
      hyps.push_back(corpus::decode_ids(ids, target_vocab));
      refs.push_back(test_split.pairs[i].target_tokens);
    }
    auto bleu = evaluation::bleu_corpus(hyps, refs);
    decode_seconds += elapsed(t_decode);
    per_seed_reports.push_back(bleu);

    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.test_bleu = bleu.score;
    outcome.best_dev_bleu = trained.best_dev_bleu;
    outcome.best_epoch = trained.best_epoch;
    outcome.checkpoint = cfg.output_dir + "/checkpoint_seed" + std::to_string(seed) + ".mmtc";
    outcome.train_log = cfg.output_dir + "/train_log_seed" + std::to_string(seed) + ".tsv";
    outcome.hypotheses = cfg.output_dir + "/hyp_seed" + std::to_string(seed) + ".txt";
    training::save_checkpoint(m.store(), outcome.checkpoint);
    training::write_training_log(outcome.train_log, trained.log);
    {
      std::ofstream hout(outcome.hypotheses, std::ios::binary);
      for (const auto& h : hyps) {
        for (std::size_t k = 0; k < h.size(); ++k) {
          if (k) hout << ' ';
          hout << h[k];
        }
        hout << '\n';
      }
    }
    manifest.seeds.push_back(std::move(outcome));
  }

  manifest.wall_clock_seconds["contexts"] = context_seconds;
  manifest.wall_clock_seconds["train"] = train_seconds;
  manifest.wall_clock_seconds["decode"] = decode_seconds;

  auto report = evaluation::macro_average_report(per_seed_reports, cfg.condition);
  manifest.macro_average = report.macro_average;
  {
    std::ofstream tsv(cfg.output_dir + "/results.tsv", std::ios::binary);
    evaluation::write_results_tsv(tsv, {report});
  }
  manifest.wall_clock_seconds["total"] = elapsed(t_start);
  manifest.save(cfg.output_dir + "/manifest.json");
  return manifest;
}

/// Decode the configured test set with a saved checkpoint and report BLEU.
template <class S>
evaluation::BleuReport evaluate_checkpoint(const ExperimentConfig& cfg,
                                           const std::string& checkpoint_path,
                                           const std::string& source_vocab_path,
                                           const std::string& target_vocab_path) {
  validate_config(cfg);
  auto train_split = corpus::load_parallel_corpus(cfg.train_source, cfg.train_target, "train");
  auto test_split = corpus::load_parallel_corpus(cfg.test_source, cfg.test_target, "test");
  auto source_vocab = corpus::Vocabulary::load_tsv(source_vocab_path);
  auto target_vocab = corpus::Vocabulary::load_tsv(target_vocab_path);
  Resources res = load_resources(cfg, train_split);

  model::ModelDims dims;
  dims.source_vocab = source_vocab.size();
  dims.target_vocab = target_vocab.size();
  dims.embed_dim = cfg.embed_dim;
  dims.hidden_dim = cfg.hidden_dim;
  dims.visual_dim = cfg.visual_dim;
  dims.visual_len = cfg.visual_len;
  dims.key_dim = cfg.key_dim;
  dims.region_score_dim = cfg.region_score_dim;
  dims.region_keep = cfg.o;
  model::Model<S> m(dims, cfg.freeze_region_params);
  training::load_checkpoint(m.store(), checkpoint_path);

  auto pooled_fn = [&](const corpus::SentencePair& pair) {
    Tape<S> tape;
    auto ids = corpus::encode_tokens(pair.source_tokens, source_vocab, false);
    auto enc = encoders::encode_text(tape, ids, m.encoder_params());
    auto pooled = encoders::pool_text(tape, enc);
    return pooled.value().col(0).template cast<double>().eval();
  };

  std::vector<std::vector<std::string>> hyps, refs;
  for (const auto& pair : test_split.pairs) {
    auto ctx = prepare_context<S>(cfg, res, pair, pooled_fn);
    Tape<S> tape;
    auto src = corpus::encode_tokens(pair.source_tokens, source_vocab, false);
    auto ids = m.translate(tape, src, ctx, cfg.max_decode_len);
    hyps.push_back(corpus::decode_ids(ids, target_vocab));
    refs.push_back(pair.target_tokens);
  }
  return evaluation::bleu_corpus(hyps, refs);
}

}  // namespace mmt::experiment
