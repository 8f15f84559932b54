// Scratch debugging harness, not part of the suites.
#include <cstdio>

#include "mmt/model.hpp"
#include "mmt/trainer.hpp"
#include "support/testutil.hpp"

using namespace mmt::training;
using mmt::Rng;

mmt::corpus::CorpusSplit toy_split(int n_pairs, int min_len = 4, int max_len = 5,
                                   std::uint64_t seed = 3) {
  const std::vector<std::string> src = {"sun", "moon", "star", "rock", "tree", "fish", "bird", "lake"};
  const std::vector<std::string> tgt = {"sonne", "mond", "stern", "fels", "baum", "fisch", "vogel", "see"};
  Rng rng(seed);
  mmt::corpus::CorpusSplit split;
  split.name = "train";
  for (int i = 0; i < n_pairs; ++i) {
    mmt::corpus::SentencePair pair;
    const int len = min_len + static_cast<int>(rng.next_below(
                                  static_cast<std::uint64_t>(max_len - min_len + 1)));
    std::vector<std::size_t> order(src.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    rng.shuffle(order);
    for (int t = 0; t < len; ++t) {
      pair.source_tokens.push_back(src[order[static_cast<std::size_t>(t)]]);
      pair.target_tokens.push_back(tgt[order[static_cast<std::size_t>(t)]]);
    }
    pair.pair_id = i;
    split.pairs.push_back(std::move(pair));
  }
  return split;
}

int main(int argc, char** argv) {
  const double lr = argc > 1 ? std::atof(argv[1]) : 0.01;
  const int max_epochs = argc > 2 ? std::atoi(argv[2]) : 75;
  const int hidden = argc > 3 ? std::atoi(argv[3]) : 8;

  auto split = toy_split(8);
  auto src_vocab = mmt::corpus::build_vocabulary(split, mmt::corpus::Side::source, 1);
  auto tgt_vocab = mmt::corpus::build_vocabulary(split, mmt::corpus::Side::target, 1);
  std::vector<mmt::model::VisualContext<double>> contexts(split.pairs.size());
  TrainData<double> data{&split, &src_vocab, &tgt_vocab, &contexts};

  TrainConfig cfg;
  cfg.batch_size = argc > 4 ? std::atoi(argv[4]) : 2;
  cfg.max_epochs = max_epochs;
  cfg.patience = max_epochs;
  cfg.learning_rate = lr;
  cfg.dropout = 0.0;

  mmt::model::ModelDims dims;
  dims.source_vocab = src_vocab.size();
  dims.target_vocab = tgt_vocab.size();
  dims.embed_dim = 8;
  dims.hidden_dim = hidden;
  dims.visual_dim = 2;
  dims.visual_len = 2;
  dims.key_dim = 4;
  dims.region_score_dim = 2;
  dims.region_keep = 1;

  mmt::model::Model<double> m(dims);
  auto trained = train_model(m, data, data, cfg, 11, 10);
  for (std::size_t i = 0; i < trained.log.size(); i += 5)
    std::printf("epoch %d loss %.4f bleu %.4f\n", trained.log[i].epoch, trained.log[i].loss,
                trained.log[i].dev_bleu);
  std::printf("last: epoch %d loss %.4f bleu %.4f updates %ld best %.4f\n",
              trained.log.back().epoch, trained.log.back().loss, trained.log.back().dev_bleu,
              trained.updates, trained.best_dev_bleu);
  return 0;
}
