// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/study_service.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <limits>
#include <sstream>

// io.hpp pulls in Eigen, which must precede httplib.h: <resolv.h> defines _res.
#include "difflab/io.hpp"

#include "httplib.h"

namespace difflab {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::int64_t system_micros() {
  using namespace std::chrono;
  return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

std::string error_body(const std::string& message) { return nlohmann::json{{"error", message}}.dump(); }

ApiResponse error_response(int status, const std::string& message) {
  return {status, "application/json", error_body(message)};
}

std::string content_type_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

std::string required_string(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw StudyError(400, std::string("request field '") + key + "' must be a nonempty string");
  }
  return it->get<std::string>();
}

}  // namespace

void StudyManifest::validate(bool check_files) const {
  require(!study.empty(), "manifest: empty study id");
  require(!pairs.empty(), "manifest: no pairs");
  rules.validate();
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    require(!p.id.empty(), "manifest: empty pair id");
    require(ids.insert(p.id).second, "manifest: duplicate pair id '" + p.id + "'");
    if (check_files) {
      for (const auto& img : {p.image_a, p.image_b}) {
        require(std::filesystem::is_regular_file(img),
                "manifest: pair '" + p.id + "' image '" + img.string() + "' is not a readable file");
      }
    }
  }
}

StudyManifest StudyManifest::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  auto str = [](const nlohmann::json& obj, const char* key) {
    const auto it = obj.find(key);
    require(it != obj.end() && it->is_string(), std::string("manifest: missing string field '") + key + "'");
    return it->get<std::string>();
  };
  require(j.is_object(), "manifest: expected an object");
  StudyManifest m;
  m.study = str(j, "study");
  if (const auto it = j.find("rules"); it != j.end()) {
    require(it->is_object(), "manifest: 'rules' must be an object");
    m.rules.min_raters = it->value("min_raters", m.rules.min_raters);
    m.rules.win_margin = it->value("win_margin", m.rules.win_margin);
  }
  const auto pairs = j.find("pairs");
  require(pairs != j.end() && pairs->is_array(), "manifest: 'pairs' must be an array");
  for (const auto& p : *pairs) {
    require(p.is_object(), "manifest: pair entries must be objects");
    StudyPair pair;
    pair.id = str(p, "id");
    pair.prompt = str(p, "prompt");
    pair.image_a = base_dir / str(p, "image_a");
    pair.image_b = base_dir / str(p, "image_b");
    pair.model_a = str(p, "model_a");
    pair.model_b = str(p, "model_b");
    m.pairs.push_back(std::move(pair));
  }
  return m;
}

StudyManifest StudyManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("manifest: invalid JSON: " + std::string(e.what()));
  }
  StudyManifest m = from_json(j, path.parent_path());
  m.validate(true);
  return m;
}

nlohmann::json presentation_json(const PairPresentation& p) {
  return {{"done", false},  {"study", p.study}, {"pair", p.pair},
          {"prompt", p.prompt}, {"left", p.left}, {"right", p.right}, {"token", p.token}};
}

StudyService::StudyService(StudyManifest manifest, std::filesystem::path vote_log, std::uint64_t seed,
                           Clock clock)
    : manifest_(std::move(manifest)),
      log_path_(std::move(vote_log)),
      clock_(clock ? std::move(clock) : Clock(system_micros)),
      rng_(seed) {
  manifest_.validate(false);
  pair_raters_.resize(manifest_.pairs.size());
  for (std::size_t i = 0; i < manifest_.pairs.size(); ++i) {
    pair_index_[manifest_.pairs[i].id] = i;
    std::string ids[2];
    for (int side = 0; side < 2; ++side) {
      do {
        ids[side] = hex64(rng_.next_u64());
      } while (image_ids_.contains(ids[side]));
      image_ids_[ids[side]] = (side == 0 ? manifest_.pairs[i].image_a : manifest_.pairs[i].image_b).string();
    }
    pair_images_.emplace_back(ids[0], ids[1]);
  }

  if (log_path_.empty()) return;
  if (std::filesystem::exists(log_path_)) {
    std::ifstream in(log_path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        records_.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::parse_error&) {
        // Unparsable lines never contribute votes; offline ingestion rejects them too.
      }
    }
    for (const auto& v : ingest_votes(records_).votes) {
      if (v.study != manifest_.study) continue;
      if (const auto it = pair_index_.find(v.pair); it != pair_index_.end()) pair_raters_[it->second].insert(v.rater);
    }
  }
  log_.open(log_path_, std::ios::app);
  if (!log_) throw std::runtime_error("cannot open vote log " + log_path_.string() + " for appending");
}

void StudyService::check_study(const std::string& study) const {
  if (study != manifest_.study) throw StudyError(404, "unknown study '" + study + "'");
}

std::string StudyService::new_token() {
  std::string token;
  do {
    token = hex64(rng_.next_u64()) + hex64(rng_.next_u64());
  } while (pending_.contains(token));
  return token;
}

std::string StudyService::image_url(std::size_t pair_index, bool image_a) const {
  const auto& ids = pair_images_[pair_index];
  return "/static/img/" + (image_a ? ids.first : ids.second);
}

std::optional<PairPresentation> StudyService::next_pair(const std::string& study, const std::string& rater) {
  check_study(study);
  if (rater.empty()) throw StudyError(400, "missing rater id");
  std::lock_guard lock(mu_);
  std::erase_if(pending_, [&](const auto& kv) { return kv.second.rater == rater; });

  std::vector<std::size_t> candidates;
  std::size_t fewest = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < pair_raters_.size(); ++i) {
    if (pair_raters_[i].contains(rater)) continue;
    const std::size_t n = pair_raters_[i].size();
    if (n < fewest) {
      fewest = n;
      candidates.clear();
    }
    if (n == fewest) candidates.push_back(i);
  }
  if (candidates.empty()) return std::nullopt;

  const std::size_t idx = candidates[rng_.index(candidates.size())];
  const bool a_on_left = rng_.uniform() < 0.5;
  PairPresentation p;
  p.study = manifest_.study;
  p.pair = manifest_.pairs[idx].id;
  p.prompt = manifest_.pairs[idx].prompt;
  p.left = image_url(idx, a_on_left);
  p.right = image_url(idx, !a_on_left);
  p.token = new_token();
  pending_[p.token] = {idx, rater, a_on_left};
  return p;
}

Vote StudyService::record_vote(const std::string& study, const std::string& pair, const std::string& rater,
                               Side side, const std::string& token) {
  check_study(study);
  const auto pit = pair_index_.find(pair);
  if (pit == pair_index_.end()) throw StudyError(404, "unknown pair '" + pair + "'");

  std::lock_guard lock(mu_);
  const auto it = pending_.find(token);
  if (it == pending_.end()) throw StudyError(403, "unknown, used or expired token");
  const Pending& pending = it->second;
  if (pending.pair_index != pit->second || pending.rater != rater) {
    throw StudyError(403, "token does not match this pair and rater");
  }

  const bool picked_left = side == Side::kLeft;
  Vote vote;
  vote.study = manifest_.study;
  vote.pair = pair;
  vote.rater = rater;
  vote.choice = picked_left == pending.a_on_left ? Choice::kA : Choice::kB;
  vote.ts_us = clock_();
  vote.ts = format_timestamp(vote.ts_us);

  const nlohmann::json record = vote_to_json(vote);
  if (log_.is_open()) {
    log_ << record.dump() << '\n';
    log_.flush();
    if (!log_) throw StudyError(500, "failed to append to the vote log");
  }
  records_.push_back(record);
  ++appended_;
  pair_raters_[pit->second].insert(rater);
  pending_.erase(it);
  return vote;
}

StudyReport StudyService::live_report(const std::string& study) const {
  check_study(study);
  std::vector<nlohmann::json> snapshot;
  {
    std::lock_guard lock(mu_);
    snapshot = records_;
  }
  const IngestResult ingested = ingest_votes(snapshot);
  return study_report(ingested.votes, manifest_.rules, manifest_.study);
}

std::string StudyService::live_report_body(const std::string& study) const {
  return io::dump(io::study_report_json(live_report(study)));
}

std::optional<std::filesystem::path> StudyService::image_path(const std::string& image_id) const {
  const auto it = image_ids_.find(image_id);
  if (it == image_ids_.end()) return std::nullopt;
  return std::filesystem::path(it->second);
}

std::size_t StudyService::appended() const {
  std::lock_guard lock(mu_);
  return appended_;
}

ApiResponse StudyService::handle(std::string_view method, std::string_view path,
                                 const std::map<std::string, std::string>& query, std::string_view body) {
  try {
    constexpr std::string_view kImg = "/static/img/";
    if (path.starts_with(kImg)) {
      if (method != "GET") return error_response(405, "method not allowed");
      const auto file = image_path(std::string(path.substr(kImg.size())));
      if (!file) return error_response(404, "unknown image");
      std::ifstream in(*file, std::ios::binary);
      if (!in) return error_response(404, "image not readable");
      std::ostringstream bytes;
      bytes << in.rdbuf();
      return {200, content_type_for(*file), bytes.str()};
    }

    constexpr std::string_view kApi = "/api/study/";
    if (!path.starts_with(kApi)) return error_response(404, "not found");
    const std::string_view rest = path.substr(kApi.size());
    const auto slash = rest.find('/');
    if (slash == std::string_view::npos || slash == 0) return error_response(404, "not found");
    const std::string study(rest.substr(0, slash));
    const std::string_view action = rest.substr(slash + 1);

    if (action == "next") {
      if (method != "GET") return error_response(405, "method not allowed");
      const auto rater = query.find("rater");
      if (rater == query.end() || rater->second.empty()) throw StudyError(400, "missing 'rater' query parameter");
      const auto p = next_pair(study, rater->second);
      return {200, "application/json", p ? presentation_json(*p).dump() : nlohmann::json{{"done", true}}.dump()};
    }
    if (action == "vote") {
      if (method != "POST") return error_response(405, "method not allowed");
      check_study(study);
      nlohmann::json req;
      try {
        req = nlohmann::json::parse(body);
      } catch (const nlohmann::json::parse_error&) {
        throw StudyError(400, "request body is not valid JSON");
      }
      if (!req.is_object()) throw StudyError(400, "request body must be a JSON object");
      const std::string side = required_string(req, "side");
      if (side != "left" && side != "right") throw StudyError(400, "side must be \"left\" or \"right\"");
      record_vote(study, required_string(req, "pair"), required_string(req, "rater"),
                  side == "left" ? Side::kLeft : Side::kRight, required_string(req, "token"));
      return {200, "application/json", nlohmann::json{{"ok", true}}.dump()};
    }
    if (action == "report") {
      if (method != "GET") return error_response(405, "method not allowed");
      return {200, "application/json", live_report_body(study)};
    }
    return error_response(404, "not found");
  } catch (const StudyError& e) {
    return error_response(e.status(), e.what());
  }
}

void mount_study_routes(httplib::Server& server, StudyService& service, const std::filesystem::path& static_dir) {
  if (!static_dir.empty()) {
    server.set_mount_point("/static", static_dir.string());
    server.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/static/index.html"); });
  }
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const ApiResponse out = service.handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  server.Get(R"(/(api|static)/.*)", forward);
  server.Post(R"(/(api|static)/.*)", forward);
}

}  // namespace difflab
