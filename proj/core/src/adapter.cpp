#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <mutex>

#include "httplib.h"

#include "biasengine/errors.hpp"
#include "biasengine/json_io.hpp"
#include "biasengine/providers.hpp"

namespace biasengine {

AdapterSpec parse_adapter_spec(const std::string& target, std::chrono::milliseconds timeout) {
  AdapterSpec spec;
  spec.target = target;
  spec.timeout = timeout;
  spec.kind = target.rfind("http://", 0) == 0 || target.rfind("https://", 0) == 0
                  ? AdapterSpec::Kind::http
                  : AdapterSpec::Kind::subprocess;
  return spec;
}

namespace {

std::chrono::milliseconds effective_timeout(const AdapterSpec& spec) {
  if (const char* env = std::getenv("BIASENGINE_ADAPTER_TIMEOUT_MS")) {
    char* end = nullptr;
    long value = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && value > 0) return std::chrono::milliseconds(value);
  }
  return spec.timeout;
}

void ignore_sigpipe_once() {
  // A dying adapter must surface as an error, not kill the host process.
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

struct Pipe {
  int fds[2] = {-1, -1};
  ~Pipe() {
    if (fds[0] >= 0) ::close(fds[0]);
    if (fds[1] >= 0) ::close(fds[1]);
  }
  void close_read() {
    if (fds[0] >= 0) ::close(fds[0]);
    fds[0] = -1;
  }
  void close_write() {
    if (fds[1] >= 0) ::close(fds[1]);
    fds[1] = -1;
  }
};

std::string run_subprocess(const std::string& command, const std::string& input,
                           std::chrono::milliseconds timeout) {
  ignore_sigpipe_once();

  Pipe to_child, from_child;
  if (::pipe(to_child.fds) != 0 || ::pipe(from_child.fds) != 0) {
    throw ProviderError("adapter: pipe() failed: " + std::string(std::strerror(errno)));
  }
  pid_t pid = ::fork();
  if (pid < 0) {
    throw ProviderError("adapter: fork() failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::setpgid(0, 0);  // own process group, so a timeout kill reaps helpers too
    ::dup2(to_child.fds[0], STDIN_FILENO);
    ::dup2(from_child.fds[1], STDOUT_FILENO);
    ::close(to_child.fds[0]);
    ::close(to_child.fds[1]);
    ::close(from_child.fds[0]);
    ::close(from_child.fds[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  ::setpgid(pid, pid);  // also from the parent side, to close the race
  to_child.close_read();
  from_child.close_write();

  auto deadline = std::chrono::steady_clock::now() + timeout;
  auto time_left = [&deadline]() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
  };
  auto kill_and_throw = [&pid](const std::string& message) -> std::string {
    if (::kill(-pid, SIGKILL) != 0) ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
    throw AdapterTimeoutError(message);
  };

  // Request payloads are small; a blocked write means the child is not
  // consuming its stdin within the deadline.
  std::size_t written = 0;
  while (written < input.size()) {
    auto left = time_left();
    if (left.count() <= 0) return kill_and_throw("adapter timed out writing request");
    struct pollfd pfd = {to_child.fds[1], POLLOUT, 0};
    int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready == 0) return kill_and_throw("adapter timed out writing request");
    ssize_t n = ::write(to_child.fds[1], input.data() + written, input.size() - written);
    if (n < 0) {
      if (errno == EPIPE) break;  // child exited early; its output/status decides
      if (errno == EINTR) continue;
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw ProviderError("adapter: write failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  to_child.close_write();

  std::string output;
  char buffer[4096];
  while (true) {
    auto left = time_left();
    if (left.count() <= 0) return kill_and_throw("adapter timed out after " +
                                                 std::to_string(timeout.count()) + " ms");
    struct pollfd pfd = {from_child.fds[0], POLLIN, 0};
    int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready == 0) {
      return kill_and_throw("adapter timed out after " + std::to_string(timeout.count()) +
                            " ms");
    }
    ssize_t n = ::read(from_child.fds[0], buffer, sizeof(buffer));
    if (n < 0) {
      if (errno == EINTR) continue;
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw ProviderError("adapter: read failed: " + std::string(std::strerror(errno)));
    }
    if (n == 0) break;
    output.append(buffer, static_cast<std::size_t>(n));
  }
  from_child.close_read();

  // The child closed stdout; give it the remaining deadline to exit.
  int status = 0;
  while (true) {
    pid_t done = ::waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (time_left().count() <= 0) {
      return kill_and_throw("adapter closed stdout but did not exit in time");
    }
    ::usleep(2000);
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw AdapterExecError("adapter exited with status " + std::to_string(code));
  }
  return output;
}

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedUrl parse_url(const std::string& url) {
  std::string rest;
  ParsedUrl out;
  if (url.rfind("http://", 0) == 0) {
    rest = url.substr(7);
  } else if (url.rfind("https://", 0) == 0) {
    throw ConfigError("adapter: https endpoints are not supported, use http");
  } else {
    throw ConfigError("adapter: not an http URL: " + url);
  }
  std::size_t slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) out.path = rest.substr(slash);
  std::size_t colon = hostport.find(':');
  if (colon == std::string::npos) {
    out.host = hostport;
  } else {
    out.host = hostport.substr(0, colon);
    out.port = std::atoi(hostport.c_str() + colon + 1);
  }
  if (out.host.empty() || out.port <= 0) throw ConfigError("adapter: bad URL: " + url);
  return out;
}

std::string run_http(const std::string& url, const std::string& payload,
                     std::chrono::milliseconds timeout) {
  ParsedUrl parsed = parse_url(url);
  httplib::Client client(parsed.host, parsed.port);
  auto seconds = static_cast<time_t>(timeout.count() / 1000);
  auto microseconds = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(seconds, microseconds);
  client.set_read_timeout(seconds, microseconds);
  client.set_write_timeout(seconds, microseconds);

  httplib::Result result = client.Post(parsed.path, payload, "application/json");
  if (!result) {
    httplib::Error err = result.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write) {
      throw AdapterTimeoutError("adapter HTTP request timed out (" + httplib::to_string(err) +
                                ")");
    }
    throw AdapterExecError("adapter HTTP request failed (" + httplib::to_string(err) + ")");
  }
  if (result->status < 200 || result->status >= 300) {
    throw AdapterExecError("adapter HTTP endpoint returned status " +
                           std::to_string(result->status));
  }
  return result->body;
}

}  // namespace

AnnotatedImageSet external_adapter(const GenerationRequest& req, const AdapterSpec& spec,
                                   const AxisSet& axes, std::vector<std::string>* warnings) {
  std::chrono::milliseconds timeout = effective_timeout(spec);
  std::string payload = dump_generation_request(req) + "\n";
  std::string body = spec.kind == AdapterSpec::Kind::subprocess
                         ? run_subprocess(spec.target, payload, timeout)
                         : run_http(spec.target, payload, timeout);
  try {
    return parse_annotated_image_set_lenient(body, axes, warnings);
  } catch (const Error& e) {
    throw AdapterSchemaError(std::string("adapter response: ") + e.what());
  }
}

AdapterProvider::AdapterProvider(AdapterSpec spec, AxisSet axes)
    : spec_(std::move(spec)), axes_(std::move(axes)) {
  if (spec_.parallelism < 1) throw ConfigError("adapter parallelism must be >= 1");
}

AnnotatedImageSet AdapterProvider::generate(const GenerationRequest& req) {
  {
    std::unique_lock lock(mutex_);
    slots_cv_.wait(lock, [this] { return in_flight_ < spec_.parallelism; });
    ++in_flight_;
  }
  std::vector<std::string> warnings;
  try {
    AnnotatedImageSet set = external_adapter(req, spec_, axes_, &warnings);
    std::unique_lock lock(mutex_);
    --in_flight_;
    warnings_.insert(warnings_.end(), warnings.begin(), warnings.end());
    lock.unlock();
    slots_cv_.notify_one();
    return set;
  } catch (...) {
    std::unique_lock lock(mutex_);
    --in_flight_;
    lock.unlock();
    slots_cv_.notify_one();
    throw;
  }
}

std::vector<std::string> AdapterProvider::take_warnings() {
  std::unique_lock lock(mutex_);
  return std::exchange(warnings_, {});
}

}  // namespace biasengine
