// Command-line front end. Exit status: 0 success, 1 invalid configuration or
// missing input, 2 failure while running.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vaeabsa.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string profile;
  std::vector<std::string> values;       // one per config key
  std::vector<CLI::Option*> options;     // parallel to values
};

vaeabsa::RunConfig resolve(const Flags& f) {
  vaeabsa::RunConfig cfg;
  vaeabsa::apply_profile(cfg, f.profile);
  if (!f.config_path.empty()) vaeabsa::load_config_file(cfg, f.config_path);
  const auto& keys = vaeabsa::config_keys();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (f.options[i]->count() > 0) vaeabsa::set_config_value(cfg, keys[i].name, f.values[i]);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised aspect-based sentiment topic model"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags flags;
  app.add_option("--config", flags.config_path, "run configuration file");
  app.add_option("--profile", flags.profile, "built-in settings: restaurants or laptops")
      ->check(CLI::IsMember({"restaurants", "laptops"}));
  const auto& keys = vaeabsa::config_keys();
  flags.values.resize(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto* opt = app.add_option("--" + keys[i].name, flags.values[i], keys[i].help);
    opt->group("[" + keys[i].section + "]");
    flags.options.push_back(opt);
  }

  auto* build_vocab = app.add_subcommand("build-vocab", "build the vocabulary from train_corpus");

  vaeabsa::TrainOptions train_opt;
  auto* train = app.add_subcommand("train", "train a model; writes checkpoint and train_log");
  train->add_option("--resume", train_opt.resume, "continue from this checkpoint");

  auto* infer = app.add_subcommand("infer", "predict aspects and sentiments for infer_input");

  vaeabsa::TopicsOptions topics_opt;
  auto* topics = app.add_subcommand("topics", "print the top_n words of every topic");
  topics->add_flag("--init", topics_opt.init, "show the seeded initialization instead of a trained model");

  auto* eval = app.add_subcommand("eval", "score predictions against eval_data");

  vaeabsa::SynthOptions synth_opt;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with planted aspects");
  synth->add_option("--out-dir", synth_opt.out_dir, "existing output directory")->required();
  synth->add_option("--documents", synth_opt.train_documents, "training documents");
  synth->add_option("--dev-documents", synth_opt.dev_documents, "dev sentences");
  synth->add_option("--test-documents", synth_opt.test_documents, "test sentences");

  vaeabsa::EmbedSyntheticOptions embed_opt;
  auto* embed = app.add_subcommand("embed-synthetic", "write a token-keyed stand-in embedding cache");
  embed->add_option("--input", embed_opt.inputs, "document files (JSON lines)")->required();
  embed->add_option("--output", embed_opt.output, "cache path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const auto cfg = resolve(flags);
    if (build_vocab->parsed()) vaeabsa::cmd_build_vocab(cfg, std::cerr);
    else if (train->parsed()) vaeabsa::cmd_train(cfg, train_opt, std::cerr);
    else if (infer->parsed()) vaeabsa::cmd_infer(cfg, std::cerr);
    else if (topics->parsed()) vaeabsa::cmd_topics(cfg, topics_opt, std::cout, std::cerr);
    else if (eval->parsed()) vaeabsa::cmd_eval(cfg, std::cout, std::cerr);
    else if (synth->parsed()) vaeabsa::cmd_synth(cfg, synth_opt, std::cerr);
    else if (embed->parsed()) vaeabsa::cmd_embed_synthetic(cfg, embed_opt, std::cerr);
  } catch (const vaeabsa::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
