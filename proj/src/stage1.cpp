#include "ugc/stage1.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "ugc/checkpoint.hpp"

namespace fs = std::filesystem;

namespace ugc {

double lr_schedule(int64_t step, int64_t total_steps, double lr0, double lr_constant_fraction) {
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_schedule: step out of range");
  const double boundary = lr_constant_fraction * static_cast<double>(total_steps);
  if (static_cast<double>(step) < boundary) return lr0;
  if (static_cast<double>(total_steps) == boundary) return step == total_steps ? 0.0 : lr0;
  return lr0 * static_cast<double>(total_steps - step) / (static_cast<double>(total_steps) - boundary);
}

namespace {

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void set_requires_grad(torch::nn::Module& m, bool value) {
  for (auto& p : m.parameters()) p.set_requires_grad(value);
}

}  // namespace

Stage1Trainer::Stage1Trainer(SuperNetState state, Stage1Config cfg, FeatureExtractor extractor,
                             uint64_t sandwich_seed)
    : state_(std::move(state)),
      cfg_(std::move(cfg)),
      extractor_(std::move(extractor)),
      sandwich_rng_(sandwich_seed) {
  auto adam = [&](const std::vector<torch::Tensor>& params) {
    return std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(cfg_.lr0).betas({cfg_.beta1, cfg_.beta2}));
  };
  opt_g_ = adam(state_.generator->parameters());
  opt_d_ = adam(state_.discriminator->parameters());
}

Stage1StepReport Stage1Trainer::step(const BatchLoader::Batch& batch_a,
                                     const std::optional<BatchLoader::Batch>& batch_u) {
  TORCH_CHECK(batch_a.target.has_value(), "stage1 step needs a labeled batch with targets");
  Stage1StepReport report;
  report.step = state_.step;
  report.lr = lr_schedule(state_.step, cfg_.total_steps, cfg_.lr0, cfg_.lr_constant_fraction);
  set_lr(*opt_g_, report.lr);
  set_lr(*opt_d_, report.lr);

  const ArchCode code_l = sample_largest(state_.generator->spec());
  const ArchCode code_r = sample_random(state_.generator->spec(), sandwich_rng_);
  const ArchCode code_s = sample_smallest(state_.generator->spec());
  report.random_code = code_r;

  const torch::Tensor& x_a = batch_a.source;
  const torch::Tensor& y_a = *batch_a.target;
  CondDiscriminator d = [this](const torch::Tensor& x, const torch::Tensor& y) {
    return state_.discriminator->forward(x, y);
  };

  // Largest sub-network, supervised adversarial step. The discriminator
  // trains only against this sub-network.
  torch::Tensor fake_l = state_.generator->forward(code_l, x_a);

  opt_d_->zero_grad();
  torch::Tensor loss_d = gan_loss_d(d(x_a, y_a), d(x_a, fake_l.detach()));
  loss_d.backward();
  opt_d_->step();
  report.loss_sup_d = loss_d.item<double>();

  set_requires_grad(*state_.discriminator, false);  // generator pass must not touch D grads
  opt_g_->zero_grad();
  torch::Tensor recon = recon_loss(fake_l, y_a);
  torch::Tensor loss_g =
      gan_loss_g(d(x_a, fake_l), cfg_.weights.non_saturating) + cfg_.weights.lambda_recon * recon;
  loss_g.backward();
  report.loss_sup_g = loss_g.item<double>();
  if (!cfg_.joint_update) {
    opt_g_->step();
    opt_g_->zero_grad();
  }

  if (batch_u) {
    const torch::Tensor& x_u = batch_u->source;
    torch::Tensor pseudo;
    {
      torch::NoGradGuard guard;  // pseudo pairs never backpropagate into the largest net
      pseudo = state_.generator->forward(code_l, x_u);
    }
    for (const ArchCode* code : {&code_r, &code_s}) {
      torch::Tensor fake = state_.generator->forward(*code, x_u);
      torch::Tensor loss = od_loss(cfg_.weights, extractor_, pseudo, fake);
      loss.backward();
      (code == &code_r ? report.loss_dist_r : report.loss_dist_s) = loss.item<double>();
      if (!cfg_.joint_update) {
        opt_g_->step();
        opt_g_->zero_grad();
      }
    }
  }

  if (cfg_.joint_update) opt_g_->step();
  set_requires_grad(*state_.discriminator, true);

  state_.step += 1;
  return report;
}

void Stage1Trainer::save_optimizers(const std::string& prefix) const {
  torch::serialize::OutputArchive ag;
  opt_g_->save(ag);
  ag.save_to(prefix + "_g.pt");
  torch::serialize::OutputArchive ad;
  opt_d_->save(ad);
  ad.save_to(prefix + "_d.pt");
}

void Stage1Trainer::load_optimizers(const std::string& prefix) {
  torch::serialize::InputArchive ag;
  ag.load_from(prefix + "_g.pt");
  opt_g_->load(ag);
  torch::serialize::InputArchive ad;
  ad.load_from(prefix + "_d.pt");
  opt_d_->load(ad);
}

namespace {

nlohmann::json report_to_json(const Stage1StepReport& r) {
  nlohmann::json j = {{"step", r.step},
                      {"lr", r.lr},
                      {"loss_sup_g", r.loss_sup_g},
                      {"loss_sup_d", r.loss_sup_d},
                      {"random_code", r.random_code.key()}};
  j["loss_dist_r"] = r.loss_dist_r ? nlohmann::json(*r.loss_dist_r) : nlohmann::json();
  j["loss_dist_s"] = r.loss_dist_s ? nlohmann::json(*r.loss_dist_s) : nlohmann::json();
  return j;
}

}  // namespace

std::string run_stage1(const DatasetPartition& part, const SearchSpaceSpec& spec,
                       const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const std::string final_path = (fs::path(cfg.out_dir) / "stage1.ckpt").string();
  const std::string latest_path = (fs::path(cfg.out_dir) / "stage1_latest.ckpt").string();
  const std::string sidecar_path = (fs::path(cfg.out_dir) / "stage1_resume.json").string();
  const std::string opt_prefix = (fs::path(cfg.out_dir) / "stage1_opt").string();
  const std::string log_path = (fs::path(cfg.out_dir) / "stage1_log.jsonl").string();

  SuperNetState state = make_supernet_state(spec, cfg.seed);
  FeatureExtractor extractor(spec.out_channels, substream_seed(cfg.seed, "extractor"));
  Stage1Trainer trainer(state, cfg.stage1, extractor, substream_seed(cfg.seed, "sandwich"));

  BatchLoader loader_a(part, Split::kLabeled, cfg.stage1.batch_size_labeled,
                       Rng(substream_seed(cfg.seed, "data.labeled")));
  std::optional<BatchLoader> loader_u;
  if (!part.unlabeled_ids.empty())
    loader_u.emplace(part, Split::kUnlabeled, cfg.stage1.batch_size_unlabeled,
                     Rng(substream_seed(cfg.seed, "data.unlabeled")));
  else
    std::cerr << "warning: unlabeled set is empty; stage 1 degrades to supervised-only\n";

  int64_t start_step = 0;
  if (fs::exists(latest_path) && fs::exists(sidecar_path)) {
    Checkpoint ckpt = load_checkpoint(latest_path);
    trainer.state().generator->load_tensors(ckpt.generator);
    trainer.state().discriminator->load_tensors(ckpt.discriminator);
    trainer.state().step = ckpt.step;
    std::ifstream is(sidecar_path);
    nlohmann::json side = nlohmann::json::parse(is);
    trainer.sandwich_rng().deserialize(side.at("sandwich_rng").get<std::string>());
    loader_a.restore(side.at("loader_labeled"));
    if (loader_u && side.contains("loader_unlabeled")) loader_u->restore(side.at("loader_unlabeled"));
    trainer.load_optimizers(opt_prefix);
    start_step = ckpt.step;
    std::cerr << "resuming stage 1 from step " << start_step << "\n";
  }

  std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::trunc);

  auto save_state = [&](const std::string& path) {
    Checkpoint ckpt;
    ckpt.spec = spec;
    ckpt.generator = trainer.state().generator->named_tensors();
    ckpt.discriminator = trainer.state().discriminator->named_tensors();
    ckpt.step = trainer.state().step;
    save_checkpoint(path, ckpt);
  };

  for (int64_t t = start_step; t < cfg.stage1.total_steps; ++t) {
    BatchLoader::Batch batch_a = loader_a.next();
    std::optional<BatchLoader::Batch> batch_u;
    if (loader_u) batch_u = loader_u->next();

    Stage1StepReport report = trainer.step(batch_a, std::move(batch_u));
    if (t % cfg.stage1.log_interval == 0 || t + 1 == cfg.stage1.total_steps)
      log << report_to_json(report) << "\n";

    if (cfg.stage1.checkpoint_interval > 0 && (t + 1) % cfg.stage1.checkpoint_interval == 0 &&
        t + 1 < cfg.stage1.total_steps) {
      save_state(latest_path);
      trainer.save_optimizers(opt_prefix);
      nlohmann::json side = {{"sandwich_rng", trainer.sandwich_rng().serialize()},
                             {"loader_labeled", loader_a.state()}};
      if (loader_u) side["loader_unlabeled"] = loader_u->state();
      std::ofstream os(sidecar_path);
      os << side.dump(2) << "\n";
    }
  }

  save_state(final_path);
  return final_path;
}

}  // namespace ugc
