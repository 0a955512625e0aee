#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncps/error.hpp"
#include "ncps/run.hpp"

namespace {

struct Overrides {
  std::string config, preset, input, output, dataset, checkpoint, mode = "all";
  std::optional<int> threads;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "Run configuration (JSON)");
  app->add_option("-i,--input", o.input, "Input dataset directory or image");
  app->add_option("-o,--output", o.output, "Run directory to write");
  app->add_option("-d,--dataset", o.dataset, "Dataset directory with ground truth");
  app->add_option("-k,--checkpoint", o.checkpoint, "Model checkpoint");
  app->add_option("-j,--threads", o.threads, "Worker thread cap (0 = hardware)")->check(CLI::NonNegativeNumber);
}

// Precedence: config file, then environment, then flags.
ncps::RunConfig resolve(const Overrides& o) {
  ncps::RunConfig c = o.config.empty() ? ncps::RunConfig{} : ncps::load_run_config(o.config);
  ncps::apply_env_overrides(c);
  if (!o.preset.empty()) c.scene.preset = o.preset;
  if (!o.input.empty()) c.paths.input = o.input;
  if (!o.output.empty()) c.paths.output = o.output;
  if (!o.dataset.empty()) c.paths.dataset = o.dataset;
  if (!o.checkpoint.empty()) c.paths.checkpoint = o.checkpoint;
  if (o.threads) c.optimizer.threads = *o.threads;
  c.validate();
  return c;
}

int report(std::string_view category, const std::string& message, int code) {
  std::cerr << nlohmann::json({{"error", {{"category", category}, {"message", message}}}}).dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image near-light color photometric stereo"};
  app.require_subcommand(1);
  Overrides o;

  CLI::App* synth = app.add_subcommand("synth", "Render an oracle dataset");
  add_common(synth, o);
  synth->add_option("-p,--preset", o.preset, "Scene preset");
  CLI::App* recon = app.add_subcommand("reconstruct", "Optimize surface and BRDF on one image");
  add_common(recon, o);
  CLI::App* ccm_train = app.add_subcommand("ccm-train", "Fit crosstalk correction on baseline captures");
  add_common(ccm_train, o);
  CLI::App* ccm_apply = app.add_subcommand("ccm-apply", "Apply a trained crosstalk correction to an image");
  add_common(ccm_apply, o);
  CLI::App* eval = app.add_subcommand("eval", "Mean angular error of a normal map against ground truth");
  add_common(eval, o);
  CLI::App* ablate = app.add_subcommand("ablate", "Full model against single-albedo or shared-channel variants");
  add_common(ablate, o);
  ablate->add_option("-m,--mode", o.mode, "no_brdf, shared_channels or all")
      ->check(CLI::IsMember({"no_brdf", "shared_channels", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report("config", e.what(), 2);
  }

  try {
    const ncps::RunConfig c = resolve(o);
    if (synth->parsed()) return ncps::command_synth(c);
    if (recon->parsed()) return ncps::command_reconstruct(c);
    if (ccm_train->parsed()) return ncps::command_ccm_train(c);
    if (ccm_apply->parsed()) return ncps::command_ccm_apply(c);
    if (eval->parsed()) return ncps::command_eval(c);
    return ncps::command_ablate(c, o.mode);
  } catch (const ncps::Error& e) {
    return report(ncps::to_string(e.category()), e.what(), ncps::exit_code(e.category()));
  } catch (const std::exception& e) {
    return report("internal", e.what(), 1);
  }
}
