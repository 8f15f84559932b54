// Scratch debugging harness, not part of the suites.
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mmt/experiment.hpp"
#include "support/testutil.hpp"

using namespace mmt;
namespace fs = std::filesystem;

// Toy world for the image-disambiguation probe: every sentence contains one
// ambiguous source token whose translation is decided by a per-sentence sense
// bit; fixture grids encode that bit in feature column 0. The dev split reuses
// the train sources with freshly drawn senses, so only a model that reads the
// images can pick the right translation there.
struct ToyWorld {
  fs::path dir;
  corpus::CorpusSplit train, dev;

  const std::vector<std::string> src_lex = {"sun",  "moon", "star", "rock",
                                            "tree", "fish", "bird", "lake"};
  const std::vector<std::string> tgt_lex = {"sonne", "mond",  "stern", "fels",
                                            "baum",  "fisch", "vogel", "see"};

  void write_fixture(const fs::path& subdir, int pair_id, int m, bool sense_a, int grid_rows,
                     int grid_cols, Rng& jitter) {
    for (int rank = 1; rank <= m; ++rank) {
      retrieval::MatF grid(grid_rows, grid_cols);
      for (int r = 0; r < grid_rows; ++r) {
        grid(r, 0) =
            static_cast<float>((sense_a ? 0.8 : -0.8) + jitter.uniform(-0.05, 0.05));
        for (int c = 1; c < grid_cols; ++c) grid(r, c) = 0.0f;
      }
      retrieval::write_feature_file(
          retrieval::ImageFeatureGrid{grid, "p" + std::to_string(pair_id)},
          (subdir / ("p" + std::to_string(pair_id) + "_r" + std::to_string(rank) + ".mmtf"))
              .string());
    }
  }

  void build(int n_train, std::uint64_t seed, int grid_rows, int grid_cols, int m,
             int content_len) {
    dir = fs::temp_directory_path() / ("mmt_c7_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir / "train_fixtures");
    fs::create_directories(dir / "dev_fixtures");
    Rng rng(seed);
    train.name = "train";
    dev.name = "dev";
    // Each source sentence appears twice in the training set, once per sense,
    // so the sense is untrainable from text alone; the fixture image is the
    // only signal that separates the two copies.
    for (int i = 0; i < n_train / 2; ++i) {
      std::vector<std::size_t> order(src_lex.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      rng.shuffle(order);
      const int amb_pos =
          static_cast<int>(rng.next_below(static_cast<std::uint64_t>(content_len + 1)));
      const bool dev_sense = rng.next_below(2) == 0;

      std::vector<std::string> source;
      std::vector<std::string> target_base;
      for (int t = 0; t < content_len + 1; ++t) {
        if (t == amb_pos) {
          source.push_back("bank");
          target_base.push_back("");
        } else {
          const int slot = t < amb_pos ? t : t - 1;
          source.push_back(src_lex[order[static_cast<std::size_t>(slot)]]);
          target_base.push_back(tgt_lex[order[static_cast<std::size_t>(slot)]]);
        }
      }
      auto target_with = [&](bool sense_a) {
        auto tgt = target_base;
        tgt[static_cast<std::size_t>(amb_pos)] = sense_a ? "ufer" : "sparkasse";
        return tgt;
      };

      for (bool sense_a : {true, false}) {
        corpus::SentencePair tr;
        tr.pair_id = static_cast<int>(train.pairs.size());
        tr.source_tokens = source;
        tr.target_tokens = target_with(sense_a);
        Rng jitter(mix_seed(seed, static_cast<std::uint64_t>(tr.pair_id)));
        write_fixture(dir / "train_fixtures", tr.pair_id, m, sense_a, grid_rows, grid_cols,
                      jitter);
        train.pairs.push_back(std::move(tr));
      }

      corpus::SentencePair dv;
      dv.pair_id = i;
      dv.source_tokens = source;
      dv.target_tokens = target_with(dev_sense);
      Rng jitter_dev(mix_seed(seed, static_cast<std::uint64_t>(i) + 500000));
      write_fixture(dir / "dev_fixtures", i, m, dev_sense, grid_rows, grid_cols, jitter_dev);
      dev.pairs.push_back(std::move(dv));
    }
  }
};

int main(int argc, char** argv) {
  const double lr = argc > 1 ? std::atof(argv[1]) : 0.05;
  const int batch = argc > 2 ? std::atoi(argv[2]) : 64;
  const int hidden = argc > 3 ? std::atoi(argv[3]) : 16;
  const long max_updates = argc > 4 ? std::atol(argv[4]) : 300;
  const int embed = argc > 5 ? std::atoi(argv[5]) : 16;

  ToyWorld world;
  const int L = 4, Dv = 4, M = 2;
  world.build(64, 99, L, Dv, M, 3);

  auto src_vocab = corpus::build_vocabulary(world.train, corpus::Side::source, 1);
  auto tgt_vocab = corpus::build_vocabulary(world.train, corpus::Side::target, 1);

  experiment::ExperimentConfig cfg;
  cfg.condition = "retrieved_images";
  cfg.image_backend = "fixture";
  cfg.embed_dim = embed;
  cfg.hidden_dim = hidden;
  cfg.visual_dim = Dv;
  cfg.visual_len = L;
  cfg.key_dim = 4;
  cfg.region_score_dim = 2;
  cfg.m = M;
  cfg.m_prime = M;
  cfg.o = 2;
  cfg.train.batch_size = batch;
  cfg.train.learning_rate = lr;
  cfg.train.dropout = 0.0;
  cfg.train.max_epochs = 100000;
  cfg.train.patience = 100000;

  auto cfg_train = cfg, cfg_dev = cfg;
  cfg_train.fixture_dir = (world.dir / "train_fixtures").string();
  cfg_dev.fixture_dir = (world.dir / "dev_fixtures").string();
  auto resources = experiment::load_resources(cfg, world.train);
  auto null_pooled = [](const corpus::SentencePair&) { return Eigen::VectorXd(); };

  model::ModelDims dims;
  dims.source_vocab = src_vocab.size();
  dims.target_vocab = tgt_vocab.size();
  dims.embed_dim = cfg.embed_dim;
  dims.hidden_dim = cfg.hidden_dim;
  dims.visual_dim = Dv;
  dims.visual_len = L;
  dims.key_dim = cfg.key_dim;
  dims.region_score_dim = 2;
  dims.region_keep = 2;

  auto contexts_for = [&](const corpus::CorpusSplit& split,
                          const experiment::ExperimentConfig& c, bool text_only) {
    std::vector<model::VisualContext<double>> out;
    for (const auto& pair : split.pairs)
      out.push_back(text_only
                        ? model::VisualContext<double>::none()
                        : experiment::prepare_context<double>(c, resources, pair, null_pooled));
    return out;
  };

  for (bool text_only : {false, true}) {
    auto train_ctx = contexts_for(world.train, cfg_train, text_only);
    auto dev_ctx = contexts_for(world.dev, cfg_dev, text_only);
    training::TrainData<double> train_data{&world.train, &src_vocab, &tgt_vocab, &train_ctx};
    training::TrainData<double> dev_data{&world.dev, &src_vocab, &tgt_vocab, &dev_ctx};
    std::printf("%s:\n", text_only ? "text_only" : "retrieved_images");
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
      model::Model<double> m(dims);
      auto trained =
          training::train_model(m, train_data, dev_data, cfg.train, seed, 12, {}, max_updates);
      // final-parameter scores (training-set memorization + dev generalization)
      const double train_bleu = training::decode_bleu(m, train_data, 12);
      const double dev_bleu = training::decode_bleu(m, dev_data, 12);
      std::printf(
          "  seed %llu: updates %ld, final loss %.4f, train BLEU %.4f, dev BLEU %.4f (best dev %.4f @%d)\n",
          static_cast<unsigned long long>(seed), trained.updates, trained.log.back().loss,
          train_bleu, dev_bleu, trained.best_dev_bleu, trained.best_epoch);
    }
  }
  fs::remove_all(world.dir);
  return 0;
}
