// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "difflab/preference.hpp"
#include "difflab/rng.hpp"

namespace httplib {
class Server;
}

namespace difflab {

struct StudyPair {
  std::string id;
  std::string prompt;
  std::filesystem::path image_a;
  std::filesystem::path image_b;
  std::string model_a;
  std::string model_b;
};

/// Manifest JSON:
/// {"study":str, "rules":{"min_raters":7,"win_margin":2},
///  "pairs":[{"id","prompt","image_a","image_b","model_a","model_b"}]}
/// Relative image paths resolve against the manifest's directory.
struct StudyManifest {
  std::string study;
  std::vector<StudyPair> pairs;
  StudyRules rules;

  /// Throws std::invalid_argument on duplicate pair ids, empty fields or
  /// (when check_files) image paths that are not regular files.
  void validate(bool check_files) const;

  static StudyManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static StudyManifest load(const std::filesystem::path& path);
};

struct PairPresentation {
  std::string study;
  std::string pair;
  std::string prompt;
  std::string left;   // image URL
  std::string right;  // image URL
  std::string token;
};

nlohmann::json presentation_json(const PairPresentation& p);

enum class Side { kLeft, kRight };

/// Request rejected by the service. status is the HTTP status to report.
class StudyError : public std::runtime_error {
 public:
  StudyError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// In-process study state: manifest, pending presentation tokens and the
/// vote log. All public methods are safe to call concurrently.
class StudyService {
 public:
  using Clock = std::function<std::int64_t()>;  // microseconds since epoch

  /// Existing lines in vote_log are loaded; new votes are appended.
  StudyService(StudyManifest manifest, std::filesystem::path vote_log, std::uint64_t seed, Clock clock = {});

  const StudyManifest& manifest() const { return manifest_; }

  /// Least-voted pair the rater has not voted on (random among ties) with a
  /// random left/right layout. nullopt when the rater is done. Issuing a new
  /// presentation expires the rater's earlier unused tokens.
  std::optional<PairPresentation> next_pair(const std::string& study, const std::string& rater);

  /// Decodes the side through the token and appends the vote to the log.
  /// Returns the logged vote. Throws StudyError on any rejection.
  Vote record_vote(const std::string& study, const std::string& pair, const std::string& rater, Side side,
                   const std::string& token);

  /// Aggregation of the current log, identical to an offline report on the
  /// same file.
  StudyReport live_report(const std::string& study) const;
  std::string live_report_body(const std::string& study) const;

  /// Image bytes for an opaque image id; nullopt when unknown.
  std::optional<std::filesystem::path> image_path(const std::string& image_id) const;

  /// Routes one request. Paths:
  ///   GET  /api/study/{id}/next?rater=..
  ///   POST /api/study/{id}/vote   body {pair, rater, side, token}
  ///   GET  /api/study/{id}/report
  ///   GET  /static/img/{image}
  ApiResponse handle(std::string_view method, std::string_view path,
                     const std::map<std::string, std::string>& query, std::string_view body);

  /// Number of lines appended to the log by this instance.
  std::size_t appended() const;

 private:
  struct Pending {
    std::size_t pair_index;
    std::string rater;
    bool a_on_left;
  };

  void check_study(const std::string& study) const;
  std::string new_token();
  std::string image_url(std::size_t pair_index, bool image_a) const;

  StudyManifest manifest_;
  std::filesystem::path log_path_;
  Clock clock_;

  mutable std::mutex mu_;
  Rng rng_;
  std::ofstream log_;
  std::vector<nlohmann::json> records_;  // every log line, in order
  std::size_t appended_ = 0;
  std::map<std::string, std::size_t> pair_index_;
  std::vector<std::set<std::string>> pair_raters_;  // per pair, raters seen
  std::unordered_map<std::string, Pending> pending_;
  std::unordered_map<std::string, std::string> image_ids_;  // opaque id -> path
  std::vector<std::pair<std::string, std::string>> pair_images_;  // per pair (A id, B id)
};

/// Installs the HTTP routes of `service` on `server`. When static_dir is
/// nonempty it is also served under /static/ (the rater page).
void mount_study_routes(httplib::Server& server, StudyService& service,
                        const std::filesystem::path& static_dir = {});

}  // namespace difflab
