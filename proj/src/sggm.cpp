#include "rograd/sggm.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace rograd {

void SggmConfig::validate() const {
  if (k < 1) fail(ErrorKind::invalid_argument, "sggm: k must be >= 1");
  if (max_rounds < 1) fail(ErrorKind::invalid_argument, "sggm: max_rounds must be >= 1");
  if (lambda < 0.0) fail(ErrorKind::invalid_argument, "sggm: lambda must be >= 0");
  for (double t : {theta_r, theta_a, theta_o, theta_d})
    if (t < -1.0 || t > 1.0)
      fail(ErrorKind::invalid_argument, "sggm: thresholds must lie in [-1, 1]");
}

DiagnosticReport diagnose(const Eigen::VectorXf& candidate, const EmbeddingStore& store,
                          const std::vector<Eigen::VectorXf>& previous_generated,
                          std::int32_t cls, const SggmConfig& config) {
  if (!store.has_class(cls, EntryKind::original))
    fail(ErrorKind::invalid_argument,
         "diagnose: class " + std::to_string(cls) + " absent from store");

  DiagnosticReport rep;
  bool any_cross = false;
  double max_same = -std::numeric_limits<double>::infinity();
  double max_cross = -std::numeric_limits<double>::infinity();
  for (const auto& e : store.entries()) {
    if (e.kind != EntryKind::original) continue;
    double s = cosine(candidate, e.vec);
    if (e.cls == cls) {
      max_same = std::max(max_same, s);
    } else {
      any_cross = true;
      max_cross = std::max(max_cross, s);
    }
  }
  rep.redundancy = max_same;
  rep.off_category = any_cross ? max_cross : 0.0;

  auto top = store.top_k_same_class(candidate, cls, static_cast<std::size_t>(config.k));
  double sum = 0.0;
  for (const auto& r : top) sum += r.score;
  rep.alignment = sum / static_cast<double>(top.size());

  double max_dup = 0.0;
  for (const auto& prev : previous_generated) max_dup = std::max(max_dup, cosine(candidate, prev));
  rep.duplication = previous_generated.empty() ? 0.0 : max_dup;

  rep.redundancy_flag = rep.redundancy > config.theta_r;
  rep.alignment_flag = rep.alignment < config.theta_a;
  rep.off_category_flag = rep.off_category > config.theta_o;
  rep.duplication_flag = rep.duplication > config.theta_d;
  return rep;
}

std::string build_feedback(const DiagnosticReport& report, const SggmConfig& config) {
  if (report.clean())
    fail(ErrorKind::invalid_argument, "build_feedback called without violations");
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  std::ostringstream ss;
  const char* sep = "";
  if (report.redundancy_flag) {
    ss << sep << "Redundancy " << fmt(report.redundancy) << " exceeds " << fmt(config.theta_r)
       << ": introduce novel elements instead of restating the closest existing papers.";
    sep = " ";
  }
  if (report.alignment_flag) {
    ss << sep << "Class alignment " << fmt(report.alignment) << " falls below "
       << fmt(config.theta_a) << ": reinforce category-specific terms and methodologies.";
    sep = " ";
  }
  if (report.off_category_flag) {
    ss << sep << "Off-category drift " << fmt(report.off_category) << " exceeds "
       << fmt(config.theta_o) << ": remove off-category terminology.";
    sep = " ";
  }
  if (report.duplication_flag) {
    ss << sep << "Duplication " << fmt(report.duplication) << " exceeds " << fmt(config.theta_d)
       << ": introduce novel elements distinct from previously generated papers.";
  }
  return ss.str();
}

Eigen::VectorXf fuse_keyword_embedding(const Eigen::VectorXf& main_embedding,
                                       const Eigen::VectorXf& keyword_embedding, double lambda) {
  if (!(main_embedding.norm() > 0.0f))
    fail(ErrorKind::invalid_argument, "fuse: main embedding is zero");
  Eigen::VectorXf fused = main_embedding;
  if (lambda > 0.0) {
    if (keyword_embedding.size() != main_embedding.size())
      fail(ErrorKind::invalid_argument, "fuse: dimension mismatch");
    fused += static_cast<float>(lambda) * keyword_embedding;
  }
  float norm = fused.norm();
  if (!(norm > 0.0f))
    fail(ErrorKind::runtime, "fuse: main and keyword embeddings cancel to zero");
  return fused / norm;
}

GeneratedSample generate_sample(std::int32_t cls, const std::string& category,
                                const EmbeddingStore& store, LlmGateway& gateway,
                                const PromptLibrary& prompts, Encoder& encoder,
                                const SggmConfig& config,
                                const std::vector<Eigen::VectorXf>& previous_generated,
                                std::uint64_t seed, const ExemplarTextFn& texts) {
  config.validate();
  if (!store.has_class(cls, EntryKind::original))
    fail(ErrorKind::invalid_argument,
         "generate_sample: class " + std::to_string(cls) + " absent from store");

  GeneratedSample out;
  out.cls = cls;

  ParsedSample draft;
  Eigen::VectorXf fused;
  std::string feedback;
  int best_violations = std::numeric_limits<int>::max();

  for (int round = 1; round <= config.max_rounds; ++round) {
    Eigen::VectorXf query = (round == 1) ? store.class_centroid(cls) : fused;
    auto ranked = store.top_k_same_class(query, cls, static_cast<std::size_t>(config.k));
    std::vector<std::string> exemplar_texts;
    exemplar_texts.reserve(ranked.size());
    for (const auto& r : ranked) exemplar_texts.push_back(texts(store.entries()[r.index].id));

    GenerationRequest request;
    request.kind = (round == 1) ? PromptKind::initial : PromptKind::refine;
    request.prompt = (round == 1)
                         ? prompts.render_initial(category, exemplar_texts)
                         : prompts.render_refine(draft, feedback, category, exemplar_texts);
    request.decoding = config.decoding;
    request.decoding.seed = mix64(seed, static_cast<std::uint64_t>(round));
    request.attempt_budget = config.attempt_budget;

    draft = gateway.complete_sample(request);

    Eigen::VectorXf main_vec = encoder.encode_one(draft.title + " " + draft.abstract);
    std::string joined;
    for (std::size_t i = 0; i < draft.keywords.size(); ++i)
      joined += (i ? ", " : "") + draft.keywords[i];
    Eigen::VectorXf kw_vec = encoder.encode_one(joined);
    fused = fuse_keyword_embedding(main_vec, kw_vec, config.lambda);

    DiagnosticReport report = diagnose(fused, store, previous_generated, cls, config);
    out.reports.push_back(report);
    out.rounds_used = round;

    // Ties prefer the latest round, hence <=.
    if (report.violations() <= best_violations) {
      best_violations = report.violations();
      out.sample = draft;
      out.embedding = fused;
    }
    if (report.clean()) {
      out.clean = true;
      return out;
    }
    if (round < config.max_rounds) feedback = build_feedback(report, config);
  }
  out.clean = false;
  return out;
}

std::vector<GeneratedSample> generate_batch(const std::vector<ClassCount>& plan,
                                            const EmbeddingStore& store, LlmGateway& gateway,
                                            const PromptLibrary& prompts, Encoder& encoder,
                                            const SggmConfig& config, std::uint64_t seed,
                                            const ExemplarTextFn& texts) {
  std::vector<GeneratedSample> out;
  std::vector<Eigen::VectorXf> previous;
  for (const auto& entry : plan) {
    if (entry.count < 0) fail(ErrorKind::invalid_argument, "generate_batch: negative count");
    for (int i = 0; i < entry.count; ++i) {
      std::uint64_t sample_seed =
          mix64(seed, static_cast<std::uint64_t>(entry.cls), static_cast<std::uint64_t>(i));
      GeneratedSample s = generate_sample(entry.cls, entry.category, store, gateway, prompts,
                                          encoder, config, previous, sample_seed, texts);
      s.id = "gen_c" + std::to_string(entry.cls) + "_" + std::to_string(i);
      previous.push_back(s.embedding);
      out.push_back(std::move(s));
    }
  }
  return out;
}

void save_samples_jsonl(const std::string& path, const std::vector<GeneratedSample>& samples) {
  std::ofstream outfile(path);
  if (!outfile) fail(ErrorKind::io, "cannot write samples: " + path);
  for (const auto& s : samples) {
    json reports = json::array();
    for (const auto& r : s.reports) {
      reports.push_back({{"redundancy", r.redundancy},
                         {"alignment", r.alignment},
                         {"off_category", r.off_category},
                         {"duplication", r.duplication},
                         {"flags",
                          {{"redundancy", r.redundancy_flag},
                           {"alignment", r.alignment_flag},
                           {"off_category", r.off_category_flag},
                           {"duplication", r.duplication_flag}}}});
    }
    std::vector<float> emb(s.embedding.data(), s.embedding.data() + s.embedding.size());
    json line = {{"id", s.id},
                 {"class", s.cls},
                 {"title", s.sample.title},
                 {"abstract", s.sample.abstract},
                 {"keywords", s.sample.keywords},
                 {"rounds", s.rounds_used},
                 {"clean", s.clean},
                 {"diagnostics", reports},
                 {"embedding", emb}};
    outfile << line.dump() << '\n';
  }
}

std::vector<GeneratedSample> load_samples_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open samples: " + path);
  std::vector<GeneratedSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::parse,
           "samples line " + std::to_string(lineno) + ": " + std::string(e.what()));
    }
    GeneratedSample s;
    try {
      s.id = doc.at("id").get<std::string>();
      s.cls = doc.at("class").get<std::int32_t>();
      s.sample.title = doc.at("title").get<std::string>();
      s.sample.abstract = doc.at("abstract").get<std::string>();
      s.sample.keywords = doc.at("keywords").get<std::vector<std::string>>();
      s.rounds_used = doc.at("rounds").get<int>();
      s.clean = doc.at("clean").get<bool>();
      auto emb = doc.at("embedding").get<std::vector<float>>();
      s.embedding = Eigen::Map<Eigen::VectorXf>(emb.data(), static_cast<Eigen::Index>(emb.size()));
      for (const auto& r : doc.at("diagnostics")) {
        DiagnosticReport rep;
        rep.redundancy = r.at("redundancy").get<double>();
        rep.alignment = r.at("alignment").get<double>();
        rep.off_category = r.at("off_category").get<double>();
        rep.duplication = r.at("duplication").get<double>();
        rep.redundancy_flag = r.at("flags").at("redundancy").get<bool>();
        rep.alignment_flag = r.at("flags").at("alignment").get<bool>();
        rep.off_category_flag = r.at("flags").at("off_category").get<bool>();
        rep.duplication_flag = r.at("flags").at("duplication").get<bool>();
        s.reports.push_back(rep);
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::parse,
           "samples line " + std::to_string(lineno) + ": " + std::string(e.what()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rograd
