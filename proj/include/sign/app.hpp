#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sign/config.hpp"
#include "sign/data.hpp"
#include "sign/eval.hpp"
#include "sign/sampler.hpp"
#include "sign/score.hpp"
#include "sign/trainer.hpp"

namespace sign::app {

const std::vector<std::string>& commands();

// Runs one command; artifacts go under out_dir (created if needed) together
// with resolved.cfg. Errors surface as sign::Error subclasses.
void run(const std::string& command, const Config& cfg, const std::string& out_dir);

// Independent generator for a named purpose, derived from the run seed.
Rng stream(std::uint64_t seed, const std::string& tag);

DatasetSpec dataset_spec(const Config& cfg);
NoiseSchedule schedule(const Config& cfg);
TrainConfig train_config(const Config& cfg);
LossOptions loss_options(const Config& cfg);
diff::MlpArch model_arch(const Config& cfg, std::size_t dim);

// Teacher score for the configured score.kind; analytic needs a mixture dataset.
std::unique_ptr<ScoreSource> make_teacher(const Config& cfg, const Dataset& data);
// model.checkpoint when set, otherwise a fresh initialization.
MlpNet initial_net(const Config& cfg, std::size_t dim);

}  // namespace sign::app
