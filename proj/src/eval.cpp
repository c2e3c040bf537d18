#include "exin/eval.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "exin/data.hpp"
#include "exin/train.hpp"
#include "exin/vocab.hpp"

namespace exin {

namespace {

constexpr int kInvalidLabel = -1;

struct ItemOutcome {
  std::string id;
  std::string mode;
  int gold_class = 0;
  int pred_class = kInvalidLabel;
  int gold_region = 0;
  int pred_region = kInvalidLabel;
  std::vector<int> generated;
  double bleu = 0.0, rouge = 0.0, meteor = 0.0;
  // token-level gate sums for this item
  double alpha_lesion_sum = 0.0, alpha_nonlesion_sum = 0.0;
  int64_t alpha_lesion_n = 0, alpha_nonlesion_n = 0;
};

std::vector<int> strip_eos(std::vector<int> ids) {
  const auto it = std::find(ids.begin(), ids.end(), vocab::kEos);
  ids.erase(it, ids.end());
  return ids;
}

int first_class_token(const std::vector<int>& ids) {
  for (int id : ids)
    if (vocab::is_class_token(id)) return id - vocab::kClassBase;
  return kInvalidLabel;
}

int first_region_token(const std::vector<int>& ids) {
  for (int id : ids)
    if (id >= vocab::kRegionBase && id < vocab::kRegionBase + vocab::kNumRegions)
      return id - vocab::kRegionBase;
  return kInvalidLabel;
}

// patch indices whose block contains any mask pixel
std::vector<int> lesion_patches_of(const Tensor& mask, int64_t patch) {
  const int64_t H = mask.shape()[0], W = mask.shape()[1];
  const int64_t grid = W / patch;
  std::vector<int> out;
  for (int64_t p = 0; p < (H / patch) * grid; ++p) {
    const int64_t y0 = (p / grid) * patch, x0 = (p % grid) * patch;
    bool hit = false;
    for (int64_t r = 0; r < patch && !hit; ++r)
      for (int64_t c = 0; c < patch && !hit; ++c)
        if (mask.data()[(y0 + r) * W + (x0 + c)] != 0.0) hit = true;
    if (hit) out.push_back(static_cast<int>(p));
  }
  return out;
}

ItemOutcome evaluate_item(const VlmModel& model, const Corpus& corpus, const CorpusItem& item,
                          int max_new_open) {
  ItemOutcome out;
  out.id = item.id;
  out.mode = item.mode;
  out.gold_class = item.class_id;
  out.gold_region = item.region;

  const ImageSample sample = corpus.load_image(item);
  const std::vector<const ImageSample*> one{&sample};
  const Tensor gen = stack_general(one);
  const Tensor exp = stack_expert_input(one);

  if (item.mode == "closed") {
    std::vector<int> allowed;
    for (int k = 0; k < vocab::kNumClasses; ++k) allowed.push_back(vocab::class_token(k));
    out.generated = model.generate(gen, exp, item.question_ids, 1, &allowed);
    out.pred_class = first_class_token(out.generated);
  } else {
    out.generated = strip_eos(model.generate(gen, exp, item.question_ids, max_new_open));
    out.pred_class = first_class_token(out.generated);
    out.pred_region = first_region_token(out.generated);
    out.bleu = bleu1(out.generated, item.answer_ids);
    out.rouge = rouge_l(out.generated, item.answer_ids);
    out.meteor = meteor_basic(out.generated, item.answer_ids);
  }

  if (model.cfg.fusion == FusionKind::kGated) {
    ForwardTrace trace;
    model.encode_fused(gen, exp, &trace);
    const std::vector<int> lesions = lesion_patches_of(sample.lesion_mask, model.cfg.patch);
    const int64_t n = model.cfg.n_visual();
    for (int64_t p = 0; p < n; ++p) {
      const double a = trace.alpha.data()[p];
      const bool is_lesion =
          std::find(lesions.begin(), lesions.end(), static_cast<int>(p)) != lesions.end();
      if (is_lesion) {
        out.alpha_lesion_sum += a;
        out.alpha_lesion_n += 1;
      } else {
        out.alpha_nonlesion_sum += a;
        out.alpha_nonlesion_n += 1;
      }
    }
  }
  return out;
}

}  // namespace

const std::set<std::string>& eval_keys() {
  static const std::set<std::string> keys = {"checkpoint", "corpus",       "split", "out",
                                             "workers",    "max_new_open", "mode"};
  return keys;
}

EvalResult eval_run(const Config& cfg, std::ostream& log) {
  cfg.check_keys(eval_keys());
  const std::string checkpoint_path = cfg.require_str("checkpoint");
  const std::string corpus_dir = cfg.require_str("corpus");
  const std::string split = cfg.get_str("split", "test");
  const std::string mode_filter = cfg.get_str("mode", "");
  const std::string out_dir = resolve_out_dir(cfg.require_str("out"));
  const int64_t workers = cfg.get_int("workers", 1);
  const int max_new_open = static_cast<int>(cfg.get_int("max_new_open", 6));
  if (workers <= 0 || workers > 64) throw ConfigError("workers must be in [1, 64]");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  const Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  const Config train_cfg = Config::from_text(ckpt.config_text);
  VlmModel model(model_config_from(train_cfg));
  apply_lora_from(model, train_cfg);
  restore_params(model, ckpt);

  const Corpus corpus = Corpus::open(corpus_dir);
  const std::vector<size_t> indices = corpus.split_indices(split, mode_filter);
  if (indices.empty()) throw ConfigError("no items in split '" + split + "'");

  log << "evaluating " << indices.size() << " items from split '" << split << "' with "
      << workers << " worker(s)\n";

  std::vector<ItemOutcome> outcomes(indices.size());
  const VlmModel& cmodel = model;
  auto work = [&](int64_t w) {
    for (size_t i = static_cast<size_t>(w); i < indices.size();
         i += static_cast<size_t>(workers))
      outcomes[i] = evaluate_item(cmodel, corpus, corpus.items[indices[i]], max_new_open);
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int64_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  EvalResult res;
  res.items = static_cast<int64_t>(outcomes.size());
  ConfusionTally tally, closed_tally;
  double bleu_sum = 0.0, rouge_sum = 0.0, meteor_sum = 0.0;
  double al_sum = 0.0, an_sum = 0.0;
  int64_t al_n = 0, an_n = 0;
  for (const ItemOutcome& o : outcomes) {
    tally.add(o.gold_class, o.pred_class);
    if (o.pred_class == kInvalidLabel) res.invalid_predictions += 1;
    if (o.mode == "closed") {
      closed_tally.add(o.gold_class, o.pred_class);
      res.closed_items += 1;
    } else {
      res.open_items += 1;
      bleu_sum += o.bleu;
      rouge_sum += o.rouge;
      meteor_sum += o.meteor;
    }
    al_sum += o.alpha_lesion_sum;
    al_n += o.alpha_lesion_n;
    an_sum += o.alpha_nonlesion_sum;
    an_n += o.alpha_nonlesion_n;
  }
  const MacroPrf prf = macro_prf(tally);
  res.metrics.f1_macro = prf.f1;
  res.metrics.recall_macro = prf.recall;
  res.metrics.precision_macro = prf.precision;
  res.closed = macro_prf(closed_tally);
  if (res.open_items > 0) {
    res.metrics.bleu1 = bleu_sum / static_cast<double>(res.open_items);
    res.metrics.rouge_l = rouge_sum / static_cast<double>(res.open_items);
    res.metrics.meteor_basic = meteor_sum / static_cast<double>(res.open_items);
  }
  if (model.cfg.fusion == FusionKind::kGated && al_n > 0 && an_n > 0) {
    res.has_alpha = true;
    res.alpha_lesion_mean = al_sum / static_cast<double>(al_n);
    res.alpha_nonlesion_mean = an_sum / static_cast<double>(an_n);
    // alpha weights the expert stream, so a gate that routes lesions to the
    // expert shows alpha(lesion) > alpha(nonlesion)
    res.alpha_gap = res.alpha_lesion_mean - res.alpha_nonlesion_mean;
  }

  // predictions, one line per item in corpus order
  {
    std::ofstream pf(out_dir + "/predictions.jsonl", std::ios::trunc);
    if (!pf) throw IoError("cannot write predictions in " + out_dir);
    for (const ItemOutcome& o : outcomes) {
      nlohmann::ordered_json j;
      j["id"] = o.id;
      j["mode"] = o.mode;
      j["gold_class"] = o.gold_class;
      j["pred_class"] = o.pred_class;
      j["gold_region"] = o.gold_region;
      j["pred_region"] = o.pred_region;
      j["generated_ids"] = o.generated;
      j["generated_text"] = vocab::decode(o.generated);
      pf << j.dump() << "\n";
    }
  }

  nlohmann::ordered_json report;
  report["eval_config"] = cfg.effective_text();
  report["train_config"] = ckpt.config_text;
  report["split"] = split;
  report["items"] = res.items;
  report["closed_items"] = res.closed_items;
  report["open_items"] = res.open_items;
  report["invalid_predictions"] = res.invalid_predictions;
  report["metrics"] = nlohmann::ordered_json::parse(res.metrics.to_json());
  report["closed"] = nlohmann::ordered_json();
  report["closed"]["f1_macro"] = res.closed.f1;
  report["closed"]["recall_macro"] = res.closed.recall;
  report["closed"]["precision_macro"] = res.closed.precision;
  report["alpha"] = nlohmann::ordered_json();
  report["alpha"]["present"] = res.has_alpha;
  report["alpha"]["lesion_mean"] = res.alpha_lesion_mean;
  report["alpha"]["nonlesion_mean"] = res.alpha_nonlesion_mean;
  report["alpha"]["gap"] = res.alpha_gap;
  res.report_path = out_dir + "/eval_report.json";
  std::ofstream rf(res.report_path, std::ios::trunc);
  if (!rf) throw IoError("cannot write eval report in " + out_dir);
  rf << report.dump(2) << "\n";

  log << "f1_macro=" << res.metrics.f1_macro << " precision_macro=" << res.metrics.precision_macro
      << " recall_macro=" << res.metrics.recall_macro;
  if (res.has_alpha) log << " alpha_gap=" << res.alpha_gap;
  log << "\n";
  return res;
}

}  // namespace exin
