#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "elkg/attribution.hpp"
#include "elkg/audit.hpp"
#include "elkg/ingest.hpp"

namespace httplib {
class Server;
}

namespace elkg {

struct ApiConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::filesystem::path ledger_path = "ledger.jsonl";
  std::filesystem::path audit_path = "ledger.audit.jsonl";
  bool read_only = false;
  bool force = false;  // start even when the audit chain is broken
};

/// Throws Error(StartupFailure) for an out-of-range port or missing paths.
void validate_config(const ApiConfig& config);

struct HttpRequest {
  std::string method;
  std::string path;  // already percent-decoded
  std::map<std::string, std::string> query;
  std::string body;
  std::map<std::string, std::string> headers;  // lower-case names
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request router over the latest published snapshot. Reads run concurrently;
/// writes are serialized, and each accepted event reaches the ledger file and
/// the audit log before the response is produced.
class Service {
 public:
  struct Snapshot {
    GraphState state;
    AttributionResult result;
  };

  /// In-memory service; `ledger_path`, when set, receives each accepted event line.
  Service(GraphState state, AuditLog audit, EntityRegistry registry,
          std::optional<std::filesystem::path> ledger_path = std::nullopt, bool read_only = false);

  /// Loads the ledger and audit log named by `config`. A missing ledger is
  /// created empty and a missing or empty audit log is rebuilt from the ledger.
  /// Throws Error(StartupFailure) for an unreadable ledger, a broken chain or
  /// an audit log that disagrees with the ledger, the last two unless `force`.
  static std::unique_ptr<Service> load(const ApiConfig& config);

  HttpResponse handle(const HttpRequest& req);

  std::shared_ptr<const Snapshot> snapshot() const;
  /// Copy of the audit entries, taken under the writer lock.
  std::vector<AuditEntry> audit_entries() const;
  const IngestReport& startup_report() const noexcept { return startup_report_; }

 private:
  HttpResponse post_event(const HttpRequest& req);
  HttpResponse post_scenario(const HttpRequest& req, const Snapshot& snap);
  HttpResponse verify(const Snapshot& snap);

  mutable std::mutex snap_mu_;
  std::shared_ptr<const Snapshot> snap_;

  mutable std::mutex write_mu_;
  AuditLog audit_;
  EntityRegistry registry_;
  std::optional<std::filesystem::path> ledger_path_;
  std::ofstream ledger_out_;
  std::optional<std::filesystem::path> audit_path_;
  bool read_only_ = false;
  IngestReport startup_report_;
};

/// HTTP front end for a Service running on a background thread.
class ServiceHandle {
 public:
  /// Binds `host:port` (port 0 picks a free port). Throws Error(StartupFailure).
  ServiceHandle(std::unique_ptr<Service> service, const std::string& host, int port);
  ~ServiceHandle();
  ServiceHandle(const ServiceHandle&) = delete;
  ServiceHandle& operator=(const ServiceHandle&) = delete;

  int port() const noexcept { return port_; }
  Service& service() noexcept { return *service_; }
  /// Stops accepting connections and waits for in-flight requests.
  void stop();

 private:
  std::unique_ptr<Service> service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// validate_config + Service::load + bind.
std::unique_ptr<ServiceHandle> serve(const ApiConfig& config);

}  // namespace elkg
