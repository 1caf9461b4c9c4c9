#pragma once

// Deterministic synthetic CI job logs. Each log is a run of generic CI step
// chatter (clone, cache, install, build, test, upload) with one or two
// category-specific failure statements planted at random depths.
//
// Filler lines carry slots ({url}, {sha}, {ver}, ...) that are filled with
// random values, so the raw logs are noisy while their normalized form is
// stable.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "citriage/dataset.hpp"
#include "citriage/errors.hpp"
#include "citriage/random.hpp"

namespace citriage {

struct CategoryTemplate {
  std::string name;
  std::vector<std::string> signature_lines;
};

struct GenConfig {
  /// Examples per template, in template order. When empty every template
  /// gets `per_category` examples.
  std::vector<std::size_t> counts;
  std::size_t per_category = 60;
  std::size_t min_lines = 50;
  std::size_t max_lines = 800;
  double duplicate_rate = 0.1;
  double noise_rate = 0.1;
  std::size_t min_signatures = 1;
  std::size_t max_signatures = 2;
  std::uint64_t seed = 0;
};

/// One template per priority category, in rank order.
[[nodiscard]] inline std::vector<CategoryTemplate> templates_default() {
  return {
      {"misconfigured_env_variable",
       {"in ./app.config.yaml: failed to render values files \"app.values.yaml\": required env var `IMAGE_NAME` is not set",
        "ERROR: environment variable DEPLOY_TOKEN is empty or undefined",
        "invalid value for variable KUBE_NAMESPACE: must be a lowercase DNS label",
        "Error: missing required CI/CD variable GCP_PROJECT_ID"}},
      {"job_execution_timeout",
       {"ERROR: Job failed: execution took longer than 1h0m0s seconds",
        "Terminated: job exceeded the maximum allowed execution time",
        "WARNING: step_script timed out, sending SIGKILL to build process"}},
      {"dependency_installation_failure",
       {"npm ERR! code ERESOLVE unable to resolve dependency tree",
        "ERROR: Could not find a version that satisfies the requirement requests==2.31.0",
        "E: Unable to locate package libssl-dev",
        "ERROR: No matching distribution found for internal-sdk"}},
      {"runner_pod_waiting_timeout",
       {"ERROR: Job failed (system failure): prepare environment: waiting for pod running: timed out waiting for pod to start",
        "Pod is still Pending: ContainersNotReady: containers with unready status: [build helper]",
        "WARNING: pod scheduling stalled, insufficient cpu on every node"}},
      {"api_gateway_deployment_error",
       {"api gateway deployment failed: proxy revision could not be deployed to environment",
        "Error deploying API proxy bundle: conflict with existing deployment",
        "apigee deploy returned HTTP status 409 Conflict"}},
      {"container_registry_server_error",
       {"error parsing HTTP 500 response body from registry: invalid character '<' looking for beginning of value",
        "received unexpected HTTP status: 503 Service Unavailable from container registry",
        "failed to push image layer: blob upload unknown to registry, server error"}},
      {"git_transient_error",
       {"fatal: unable to access repository: The requested URL returned error: 502",
        "error: RPC failed; curl 56 GnuTLS recv error (-9): A TLS packet with unexpected length was received.",
        "fatal: the remote end hung up unexpectedly",
        "fatal: early EOF while fetching pack from remote"}},
      {"flaky_ui_test",
       {"TimeoutError: waiting for selector \"#submit-button\" to be visible failed",
        "ElementClickInterceptedError: element is not clickable because another element obscures it",
        "StaleElementReferenceException: element is no longer attached to the DOM",
        "AssertionError: expected spinner to disappear before rendering the dashboard"}},
      {"external_file_invalid_format",
       {"curl: (26) Failed to open/read local data from file/application",
        "zip file validate API is failed",
        "Error: invalid file format, expected a valid zip archive",
        "unexpected end of JSON input while parsing external manifest"}},
      {"host_resolution_failure",
       {"Could not resolve host: artifactory.internal.example.com",
        "getaddrinfo ENOTFOUND api.partner-service.example.net",
        "dial tcp: lookup vault.example.com: no such host",
        "Temporary failure in name resolution"}},
      {"runner_image_pull_failure",
       {"ERROR: Job failed: failed to pull image \"registry.example.com/ci/node:18\" with specified policies",
        "Back-off pulling image: ErrImagePull: rpc error: manifest unknown",
        "ImagePullBackOff: container image could not be pulled by the runner"}},
      {"remote_call_timeout",
       {"requests.exceptions.ReadTimeout: HTTPSConnectionPool read timed out. (read timeout=30)",
        "context deadline exceeded while awaiting headers from remote service",
        "java.net.SocketTimeoutException: Read timed out calling upstream endpoint"}},
      {"helm_resource_error",
       {"Error: UPGRADE FAILED: another operation (install/upgrade/rollback) is in progress",
        "Error: INSTALLATION FAILED: rendered manifests contain a resource that already exists",
        "helm release failed: resource quota exceeded for chart resources"}},
  };
}

[[nodiscard]] inline CategoryRegistry registry_from_templates(const std::vector<CategoryTemplate>& templates) {
  CategoryRegistry registry;
  for (const auto& t : templates) registry.add(t.name);
  return registry;
}

namespace detail {

inline constexpr std::array<std::string_view, 36> kFillerLines{
    "Running with gitlab-runner {ver} ({sha})",
    "  on {runner} {sha}",
    "Preparing the \"kubernetes\" executor",
    "Using Kubernetes executor with image {url} ...",
    "Preparing environment",
    "Running on {runner} via {runner}...",
    "Getting source from Git repository",
    "Fetching changes with git depth set to 20...",
    "Initialized empty Git repository in {dir}/.git/",
    "Created fresh repository.",
    "Checking out {sha} as detached HEAD (ref is {branch})...",
    "Skipping Git submodules setup",
    "Restoring cache",
    "Checking cache for {branch}-{num}-protected...",
    "Downloading cache.zip from {url}",
    "Successfully extracted cache",
    "Executing \"step_script\" stage of the job script",
    "$ npm ci --prefer-offline --no-audit",
    "added {num} packages, and audited {num} packages in {dur}",
    "$ pip install -r requirements.txt",
    "Collecting {pkg}=={ver}",
    "Requirement already satisfied: {pkg} in {dir}",
    "$ docker build -t app:{sha} .",
    "Step {num}/{num} : COPY . /app",
    " ---> Using cache",
    "Successfully built {sha}",
    "$ make test",
    "PASS {path} ({dur})",
    "Tests: {num} passed, {num} total",
    "section_start:{epoch}:step_script",
    "section_end:{epoch}:step_script",
    "Saving cache for successful job",
    "Uploading artifacts...",
    "{path}: found {num} matching files and directories",
    "Cleaning up project directory and file based variables",
    "[{clock}] GET {url} -> 200 in {dur}",
};

// Injected at the noise rate: bare random URLs, IDs, versions, hashes and
// clock-stamped filler.
inline constexpr std::array<std::string_view, 6> kNoiseLines{"{url}", "{runner}", "v{ver}", "{sha}",
                                                             "[{clock}] Restoring cache", "[{clock}] Uploading artifacts..."};

inline constexpr std::array<std::string_view, 6> kHosts{"gitlab.example.com", "registry.example.com",
                                                        "artifacts.example.org", "cdn.example.net",
                                                        "pypi.example.org", "storage.example.com"};
inline constexpr std::array<std::string_view, 8> kWords{"core", "billing", "auth", "gateway",
                                                        "portal", "worker", "reports", "sdk"};
inline constexpr std::array<std::string_view, 4> kPackages{"numpy", "lodash", "pytest", "express"};
inline constexpr std::array<std::string_view, 5> kExtensions{"py", "ts", "js", "go", "java"};
inline constexpr std::array<std::string_view, 4> kBranches{"main", "develop", "release", "feature"};

class SlotFiller {
 public:
  explicit SlotFiller(Rng& rng) : rng_(rng) {}

  std::string fill(std::string_view pattern) {
    std::string out;
    std::size_t i = 0;
    while (i < pattern.size()) {
      if (pattern[i] == '{') {
        const auto close = pattern.find('}', i);
        out += value(pattern.substr(i + 1, close - i - 1));
        i = close + 1;
      } else {
        out.push_back(pattern[i++]);
      }
    }
    return out;
  }

  std::string value(std::string_view slot) {
    if (slot == "ver") return std::to_string(pick(20)) + "." + std::to_string(pick(10)) + "." + std::to_string(pick(30));
    if (slot == "sha") return hex(8);
    if (slot == "num") return std::to_string(pick(5000));
    if (slot == "epoch") return std::to_string(1700000000 + pick(50000000));
    if (slot == "dur") {
      switch (pick(3)) {
        case 0: return std::to_string(1 + pick(900)) + "ms";
        case 1: return std::to_string(1 + pick(59)) + "s";
        default: return std::to_string(1 + pick(9)) + "m" + std::to_string(pick(60)) + "s";
      }
    }
    if (slot == "host") return std::string(kHosts[pick(kHosts.size())]);
    if (slot == "url") {
      return "https://" + std::string(kHosts[pick(kHosts.size())]) + "/" + std::string(kWords[pick(kWords.size())]) +
             "/" + hex(6) + ".tar.gz";
    }
    if (slot == "pkg") return std::string(kPackages[pick(kPackages.size())]);
    if (slot == "path") {
      return "src/" + std::string(kWords[pick(kWords.size())]) + "/" + std::string(kWords[pick(kWords.size())]) + "_" +
             std::to_string(pick(100)) + "." + std::string(kExtensions[pick(kExtensions.size())]);
    }
    if (slot == "dir") return "/builds/" + std::string(kWords[pick(kWords.size())]) + "/" + std::string(kWords[pick(kWords.size())]);
    if (slot == "runner") return "runner-" + hex(8) + "-project-" + std::to_string(pick(9000)) + "-concurrent-" + std::to_string(pick(4));
    if (slot == "branch") return std::string(kBranches[pick(kBranches.size())]);
    if (slot == "clock") {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%02zu:%02zu:%02zu", pick(24), pick(60), pick(60));
      return buf;
    }
    if (slot == "ts") {
      char buf[40];
      std::snprintf(buf, sizeof buf, "2024-%02zu-%02zuT%02zu:%02zu:%02zu.%03zuZ", 1 + pick(12), 1 + pick(28), pick(24),
                    pick(60), pick(60), pick(1000));
      return buf;
    }
    throw ValidationError("unknown template slot '" + std::string(slot) + "'");
  }

  std::size_t pick(std::size_t n) { return uniform_index(rng_, n); }

 private:
  std::string hex(std::size_t digits) {
    static constexpr std::string_view kHex = "0123456789abcdef";
    std::string out;
    for (std::size_t k = 0; k < digits; ++k) out.push_back(kHex[pick(16)]);
    return out;
  }

  Rng& rng_;
};

}  // namespace detail

/// Generates labeled logs, template by template. Output depends only on the
/// templates and the config (including its seed).
[[nodiscard]] inline std::vector<LabeledExample> generate_corpus(const std::vector<CategoryTemplate>& templates,
                                                                 const GenConfig& cfg) {
  if (templates.empty()) throw ValidationError("generate_corpus: no templates");
  if (cfg.min_lines < 5 || cfg.max_lines < cfg.min_lines) throw ValidationError("generate_corpus: need 5 <= min_lines <= max_lines");
  if (!cfg.counts.empty() && cfg.counts.size() != templates.size()) {
    throw ValidationError("generate_corpus: counts must match the number of templates");
  }
  if (cfg.min_signatures < 1 || cfg.max_signatures < cfg.min_signatures) {
    throw ValidationError("generate_corpus: need 1 <= min_signatures <= max_signatures");
  }
  for (const auto& t : templates) {
    if (t.signature_lines.empty()) throw ValidationError("template '" + t.name + "' has no signature lines");
  }

  Rng rng(cfg.seed);
  detail::SlotFiller filler(rng);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<LabeledExample> out;
  for (std::size_t t = 0; t < templates.size(); ++t) {
    const auto& tmpl = templates[t];
    const std::size_t count = cfg.counts.empty() ? cfg.per_category : cfg.counts[t];
    for (std::size_t e = 0; e < count; ++e) {
      LabeledExample example;
      char id[32];
      std::snprintf(id, sizeof id, "-%05zu", e);
      example.id = tmpl.name + id;
      example.category = t;

      const std::size_t n_lines = cfg.min_lines + filler.pick(cfg.max_lines - cfg.min_lines + 1);
      auto& lines = example.raw.lines;
      while (lines.size() < n_lines) {
        if (!lines.empty() && coin(rng) < cfg.duplicate_rate) {
          lines.push_back(lines[filler.pick(lines.size())]);
          continue;
        }
        std::string line;
        if (coin(rng) < cfg.noise_rate) {
          line = filler.fill(detail::kNoiseLines[filler.pick(detail::kNoiseLines.size())]);
        } else {
          line = filler.fill(detail::kFillerLines[filler.pick(detail::kFillerLines.size())]);
        }
        lines.push_back(std::move(line));
      }

      const std::size_t max_sig = std::min(cfg.max_signatures, tmpl.signature_lines.size());
      const std::size_t min_sig = std::min(cfg.min_signatures, max_sig);
      const std::size_t n_sig = min_sig + filler.pick(max_sig - min_sig + 1);
      std::vector<std::size_t> chosen(tmpl.signature_lines.size());
      for (std::size_t k = 0; k < chosen.size(); ++k) chosen[k] = k;
      for (std::size_t k = 0; k < n_sig; ++k) {
        std::swap(chosen[k], chosen[k + filler.pick(chosen.size() - k)]);
        const auto at = static_cast<std::ptrdiff_t>(filler.pick(lines.size() + 1));
        lines.insert(lines.begin() + at, tmpl.signature_lines[chosen[k]]);
      }
      out.push_back(std::move(example));
    }
  }
  return out;
}

/// Keyword oracle: the template whose signature line appears verbatim in
/// the log, or nullopt when none or several do.
[[nodiscard]] inline std::optional<CategoryId> signature_category(const RawLog& log,
                                                                  const std::vector<CategoryTemplate>& templates) {
  std::optional<CategoryId> found;
  for (CategoryId t = 0; t < templates.size(); ++t) {
    for (const auto& sig : templates[t].signature_lines) {
      if (std::find(log.lines.begin(), log.lines.end(), sig) != log.lines.end()) {
        if (found && *found != t) return std::nullopt;
        found = t;
      }
    }
  }
  return found;
}

}  // namespace citriage
