#include "ugc/stage2.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "ugc/metrics.hpp"
#include "ugc/stage1.hpp"

namespace fs = std::filesystem;

namespace ugc {

void EmaTracker::update(double score) {
  if (!(score >= 0.0 && score <= 1.0))
    throw std::invalid_argument("EmaTracker: score must lie in [0, 1]");
  if (!initialized) {
    value = score;
    initialized = true;
    return;
  }
  value = decay * value + (1.0 - decay) * score;
}

int adaptive_filter(double d_score, const EmaTracker& tracker, Rng& rng, double gate_probability) {
  if (!tracker.initialized) throw std::invalid_argument("adaptive_filter: tracker not initialized");
  if (d_score <= tracker.value) return 1;  // ties take the deterministic branch
  return rng.bernoulli(gate_probability) ? 1 : 0;
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

Stage2Trainer::Stage2Trainer(std::shared_ptr<StandaloneGenerator> student,
                             std::shared_ptr<StandaloneGenerator> teacher_deeper,
                             std::shared_ptr<StandaloneGenerator> teacher_wider,
                             std::shared_ptr<PatchDiscriminator> discriminator, Stage2Config cfg,
                             FeatureExtractor extractor, uint64_t gates_seed)
    : student_(std::move(student)),
      teacher_d_(std::move(teacher_deeper)),
      teacher_w_(std::move(teacher_wider)),
      disc_(std::move(discriminator)),
      cfg_(std::move(cfg)),
      extractor_(std::move(extractor)),
      gates_rng_(gates_seed) {
  ema_d_.decay = cfg_.ema_decay;
  ema_w_.decay = cfg_.ema_decay;
  auto adam = [&](const std::vector<torch::Tensor>& params) {
    return std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(cfg_.lr0).betas({cfg_.beta1, cfg_.beta2}));
  };
  opt_s_ = adam(student_->parameters());
  opt_td_ = adam(teacher_d_->parameters());
  opt_tw_ = adam(teacher_w_->parameters());
  opt_d_ = adam(disc_->parameters());
}

void Stage2Trainer::set_step_lr(double lr) {
  set_lr(*opt_s_, lr);
  set_lr(*opt_td_, lr);
  set_lr(*opt_tw_, lr);
  set_lr(*opt_d_, lr);
}

void Stage2Trainer::teacher_step(const BatchLoader::Batch& batch_a, Stage2StepReport& report) {
  TORCH_CHECK(batch_a.target.has_value(), "teacher_step needs a labeled batch");
  const torch::Tensor& x = batch_a.source;
  const torch::Tensor& y = *batch_a.target;
  CondDiscriminator d = [this](const torch::Tensor& a, const torch::Tensor& b) {
    return disc_->forward(a, b);
  };

  double loss_d_total = 0.0;
  struct TeacherSlot {
    StandaloneGenerator* gen;
    torch::optim::Adam* opt;
    std::optional<double>* loss_g;
    std::optional<double>* recon;
  };
  TeacherSlot slots[2] = {
      {teacher_d_.get(), opt_td_.get(), &report.teacher_loss_g_deeper, &report.teacher_recon_deeper},
      {teacher_w_.get(), opt_tw_.get(), &report.teacher_loss_g_wider, &report.teacher_recon_wider}};

  for (TeacherSlot& slot : slots) {
    torch::Tensor fake = slot.gen->forward(x);

    opt_d_->zero_grad();
    torch::Tensor loss_d = gan_loss_d(d(x, y), d(x, fake.detach()));
    loss_d.backward();
    opt_d_->step();
    loss_d_total += loss_d.item<double>();

    set_requires_grad(*disc_, false);
    slot.opt->zero_grad();
    torch::Tensor recon = recon_loss(fake, y);
    torch::Tensor loss_g =
        gan_loss_g(d(x, fake), cfg_.weights.non_saturating) + cfg_.weights.lambda_recon * recon;
    loss_g.backward();
    slot.opt->step();
    set_requires_grad(*disc_, true);

    *slot.loss_g = loss_g.item<double>();
    *slot.recon = recon.item<double>();
  }
  report.teacher_loss_d = loss_d_total;
  report.teacher_updated = true;
}

void Stage2Trainer::student_step(const BatchLoader::Batch& batch_a,
                                 const std::optional<BatchLoader::Batch>& batch_u,
                                 Stage2StepReport& report) {
  const torch::Tensor& x_a = batch_a.source;

  // Teacher guidance is always gradient-blocked; the student never sees a
  // discriminator gradient either (scores below run under no-grad).
  torch::Tensor t_d_a, t_w_a;
  {
    torch::NoGradGuard guard;
    t_d_a = teacher_d_->forward(x_a);
    t_w_a = teacher_w_->forward(x_a);
  }

  opt_s_->zero_grad();
  torch::Tensor s_a = student_->forward(x_a);
  torch::Tensor loss_sup = od_loss(cfg_.weights, extractor_, t_d_a, s_a) +
                           od_loss(cfg_.weights, extractor_, t_w_a, s_a);
  torch::Tensor total = loss_sup;

  if (batch_u) {
    const torch::Tensor& x_u = batch_u->source;
    torch::Tensor t_d_u, t_w_u, scores_d, scores_w;
    {
      torch::NoGradGuard guard;
      t_d_u = teacher_d_->forward(x_u);
      t_w_u = teacher_w_->forward(x_u);
      scores_d = disc_->forward(x_u, t_d_u).mean({1, 2, 3});  // per-sample realism
      scores_w = disc_->forward(x_u, t_w_u).mean({1, 2, 3});
    }
    torch::Tensor s_u = student_->forward(x_u);

    torch::Tensor loss_unsup = torch::zeros({}, s_u.options());
    struct GateSlot {
      torch::Tensor teacher_out;
      torch::Tensor scores;
      EmaTracker* tracker;
      std::optional<double>*score, *ema, *gate;
    };
    GateSlot slots[2] = {{t_d_u, scores_d, &ema_d_, &report.d_score_deeper, &report.ema_deeper,
                          &report.gate_deeper},
                         {t_w_u, scores_w, &ema_w_, &report.d_score_wider, &report.ema_wider,
                          &report.gate_wider}};
    for (GateSlot& slot : slots) {
      double batch_score = slot.scores.mean().item<double>();
      slot.tracker->update(batch_score);  // EMA advances before any gate draw
      *slot.score = batch_score;
      *slot.ema = slot.tracker->value;
      if (cfg_.per_sample_gating) {
        const int64_t b = x_u.size(0);
        double gate_sum = 0.0;
        for (int64_t i = 0; i < b; ++i) {
          int gate = adaptive_filter(slot.scores[i].item<double>(), *slot.tracker, gates_rng_,
                                     cfg_.gate_probability);
          gate_sum += gate;
          if (gate)
            loss_unsup = loss_unsup + od_loss(cfg_.weights, extractor_,
                                              slot.teacher_out.narrow(0, i, 1),
                                              s_u.narrow(0, i, 1)) /
                                          static_cast<double>(b);
        }
        *slot.gate = gate_sum / static_cast<double>(b);
      } else {
        int gate = adaptive_filter(batch_score, *slot.tracker, gates_rng_, cfg_.gate_probability);
        *slot.gate = gate;
        if (gate)
          loss_unsup = loss_unsup + od_loss(cfg_.weights, extractor_, slot.teacher_out, s_u);
      }
    }
    report.loss_unsup_dist = loss_unsup.item<double>();
    total = total + loss_unsup;
  }

  total.backward();
  opt_s_->step();
  report.loss_sup_dist = loss_sup.item<double>();
}

Stage2StepReport Stage2Trainer::step(const BatchLoader::Batch& batch_a,
                                     const std::optional<BatchLoader::Batch>& batch_u) {
  Stage2StepReport report;
  report.step = step_;
  report.lr = lr_schedule(step_, cfg_.total_steps, cfg_.lr0, cfg_.lr_constant_fraction);
  set_step_lr(report.lr);

  if (step_ % cfg_.teacher_update_interval == 0) teacher_step(batch_a, report);
  student_step(batch_a, batch_u, report);

  report.total = report.loss_sup_dist + report.loss_unsup_dist.value_or(0.0) +
                 report.teacher_loss_g_deeper.value_or(0.0) +
                 report.teacher_loss_g_wider.value_or(0.0);
  step_ += 1;
  return report;
}

nlohmann::json Stage2Trainer::mutable_state() const {
  return {{"step", step_},
          {"gates_rng", gates_rng_.serialize()},
          {"ema_deeper", {{"value", ema_d_.value}, {"initialized", ema_d_.initialized}}},
          {"ema_wider", {{"value", ema_w_.value}, {"initialized", ema_w_.initialized}}}};
}

void Stage2Trainer::restore_state(const nlohmann::json& j) {
  step_ = j.at("step").get<int64_t>();
  gates_rng_.deserialize(j.at("gates_rng").get<std::string>());
  ema_d_.value = j.at("ema_deeper").at("value").get<double>();
  ema_d_.initialized = j.at("ema_deeper").at("initialized").get<bool>();
  ema_w_.value = j.at("ema_wider").at("value").get<double>();
  ema_w_.initialized = j.at("ema_wider").at("initialized").get<bool>();
}

void Stage2Trainer::save_optimizers(const std::string& prefix) const {
  const std::pair<torch::optim::Adam*, const char*> slots[] = {
      {opt_s_.get(), "_s.pt"}, {opt_td_.get(), "_td.pt"}, {opt_tw_.get(), "_tw.pt"},
      {opt_d_.get(), "_d.pt"}};
  for (const auto& [opt, suffix] : slots) {
    torch::serialize::OutputArchive a;
    opt->save(a);
    a.save_to(prefix + suffix);
  }
}

void Stage2Trainer::load_optimizers(const std::string& prefix) {
  const std::pair<torch::optim::Adam*, const char*> slots[] = {
      {opt_s_.get(), "_s.pt"}, {opt_td_.get(), "_td.pt"}, {opt_tw_.get(), "_tw.pt"},
      {opt_d_.get(), "_d.pt"}};
  for (const auto& [opt, suffix] : slots) {
    torch::serialize::InputArchive a;
    a.load_from(prefix + suffix);
    opt->load(a);
  }
}

namespace {

nlohmann::json opt_double(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

nlohmann::json report_to_json(const Stage2StepReport& r) {
  return {{"step", r.step},
          {"lr", r.lr},
          {"teacher_updated", r.teacher_updated},
          {"teacher_loss_g_deeper", opt_double(r.teacher_loss_g_deeper)},
          {"teacher_loss_g_wider", opt_double(r.teacher_loss_g_wider)},
          {"teacher_loss_d", opt_double(r.teacher_loss_d)},
          {"teacher_recon_deeper", opt_double(r.teacher_recon_deeper)},
          {"teacher_recon_wider", opt_double(r.teacher_recon_wider)},
          {"loss_sup_dist", r.loss_sup_dist},
          {"loss_unsup_dist", opt_double(r.loss_unsup_dist)},
          {"d_score_deeper", opt_double(r.d_score_deeper)},
          {"d_score_wider", opt_double(r.d_score_wider)},
          {"ema_deeper", opt_double(r.ema_deeper)},
          {"ema_wider", opt_double(r.ema_wider)},
          {"gate_deeper", opt_double(r.gate_deeper)},
          {"gate_wider", opt_double(r.gate_wider)},
          {"total", r.total}};
}

}  // namespace

std::string run_stage2(const Checkpoint& stage1_ckpt, const ArchCode& student_code,
                       const ArchCode& deeper_code, const ArchCode& wider_code,
                       const DatasetPartition& part, const std::vector<PairedSample>& eval_split,
                       const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const SearchSpaceSpec& spec = stage1_ckpt.spec;
  const std::string student_path = (fs::path(cfg.out_dir) / "stage2_student.ckpt").string();
  const std::string latest_path = (fs::path(cfg.out_dir) / "stage2_latest.ckpt").string();
  const std::string teachers_path = (fs::path(cfg.out_dir) / "stage2_teachers.ckpt").string();
  const std::string sidecar_path = (fs::path(cfg.out_dir) / "stage2_resume.json").string();
  const std::string opt_prefix = (fs::path(cfg.out_dir) / "stage2_opt").string();
  const std::string log_path = (fs::path(cfg.out_dir) / "stage2_log.jsonl").string();

  // Weight inheritance: student and teachers start as slices of the trained
  // store; the teachers' discriminator is the stage-1 discriminator.
  auto net = std::make_shared<SuperNet>(spec, /*init_seed=*/0);
  net->load_tensors(stage1_ckpt.generator);
  auto student = StandaloneGenerator::from_supernet(*net, student_code);
  auto teacher_deeper = StandaloneGenerator::from_supernet(*net, deeper_code);
  auto teacher_wider = StandaloneGenerator::from_supernet(*net, wider_code);
  auto disc = std::make_shared<PatchDiscriminator>(spec.in_channels + spec.out_channels, 64,
                                                   /*init_seed=*/0);
  disc->load_tensors(stage1_ckpt.discriminator);

  FeatureExtractor extractor(spec.out_channels, substream_seed(cfg.seed, "extractor"));
  Stage2Trainer trainer(student, teacher_deeper, teacher_wider, disc, cfg.stage2, extractor,
                        substream_seed(cfg.seed, "gates"));

  BatchLoader loader_a(part, Split::kLabeled, cfg.stage2.batch_size_labeled,
                       Rng(substream_seed(cfg.seed, "data2.labeled")));
  std::optional<BatchLoader> loader_u;
  if (!part.unlabeled_ids.empty())
    loader_u.emplace(part, Split::kUnlabeled, cfg.stage2.batch_size_unlabeled,
                     Rng(substream_seed(cfg.seed, "data2.unlabeled")));
  else
    std::cerr << "warning: unlabeled set is empty; stage 2 runs supervised distillation only\n";

  int64_t start_step = 0;
  if (fs::exists(latest_path) && fs::exists(teachers_path) && fs::exists(sidecar_path)) {
    Checkpoint latest = load_checkpoint(latest_path);
    student->load_tensors(latest.generator);
    disc->load_tensors(latest.discriminator);
    Checkpoint teachers = load_checkpoint(teachers_path);
    TensorMap td, tw;
    for (const auto& [name, tensor] : teachers.generator) {
      if (name.rfind("deeper/", 0) == 0) td[name.substr(7)] = tensor;
      if (name.rfind("wider/", 0) == 0) tw[name.substr(6)] = tensor;
    }
    teacher_deeper->load_tensors(td);
    teacher_wider->load_tensors(tw);
    std::ifstream is(sidecar_path);
    nlohmann::json side = nlohmann::json::parse(is);
    trainer.restore_state(side.at("trainer"));
    loader_a.restore(side.at("loader_labeled"));
    if (loader_u && side.contains("loader_unlabeled")) loader_u->restore(side.at("loader_unlabeled"));
    trainer.load_optimizers(opt_prefix);
    start_step = trainer.current_step();
    std::cerr << "resuming stage 2 from step " << start_step << "\n";
  }

  std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::trunc);

  auto save_student = [&](const std::string& path, bool with_disc) {
    Checkpoint ckpt;
    ckpt.spec = spec;
    ckpt.code = student_code;
    ckpt.generator = student->named_tensors();
    if (with_disc) ckpt.discriminator = disc->named_tensors();
    ckpt.step = trainer.current_step();
    save_checkpoint(path, ckpt);
  };
  auto save_teachers = [&]() {
    Checkpoint ckpt;
    ckpt.spec = spec;
    for (const auto& [name, tensor] : teacher_deeper->named_tensors())
      ckpt.generator["deeper/" + name] = tensor;
    for (const auto& [name, tensor] : teacher_wider->named_tensors())
      ckpt.generator["wider/" + name] = tensor;
    ckpt.step = trainer.current_step();
    save_checkpoint(teachers_path, ckpt);
  };

  for (int64_t t = start_step; t < cfg.stage2.total_steps; ++t) {
    BatchLoader::Batch batch_a = loader_a.next();
    std::optional<BatchLoader::Batch> batch_u;
    if (loader_u) batch_u = loader_u->next();

    Stage2StepReport report = trainer.step(batch_a, std::move(batch_u));
    if (t % cfg.stage2.log_interval == 0 || t + 1 == cfg.stage2.total_steps)
      log << report_to_json(report) << "\n";

    if (cfg.stage2.checkpoint_interval > 0 && (t + 1) % cfg.stage2.checkpoint_interval == 0 &&
        t + 1 < cfg.stage2.total_steps) {
      save_student(latest_path, /*with_disc=*/true);
      save_teachers();
      trainer.save_optimizers(opt_prefix);
      nlohmann::json side = {{"trainer", trainer.mutable_state()},
                             {"loader_labeled", loader_a.state()}};
      if (loader_u) side["loader_unlabeled"] = loader_u->state();
      std::ofstream os(sidecar_path);
      os << side.dump(2) << "\n";
    }
  }

  save_student(student_path, /*with_disc=*/false);

  if (eval_split.empty()) {
    std::cerr << "warning: no held-out images; skipping the final evaluation report\n";
    return student_path;
  }
  FeatureExtractor fid_extractor(spec.out_channels, kProxyFidSeed);
  EvalReport report = evaluate(
      [&](const torch::Tensor& x) {
        torch::NoGradGuard guard;
        return student->forward(x);
      },
      student_code, spec, eval_split, fid_extractor);
  write_eval_report(cfg.out_dir, "stage2_student", report, cfg.dataset.fraction);
  return student_path;
}

}  // namespace ugc
