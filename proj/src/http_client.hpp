#pragma once

// Internal: the one place httplib's client side is configured.

#include <chrono>
#include <memory>
#include <mutex>
#include <vector>

#include <httplib.h>

#include "biasscope/url.hpp"

namespace biasscope::detail {

std::unique_ptr<httplib::Client> make_client(const ParsedUrl& url, std::chrono::milliseconds timeout);

/// Idle-connection pool; each in-flight request owns one client.
class HttpPool {
 public:
  HttpPool(ParsedUrl url, std::chrono::milliseconds timeout)
      : url_(std::move(url)), timeout_(timeout) {}

  class Lease {
   public:
    Lease(HttpPool& pool, std::unique_ptr<httplib::Client> client)
        : pool_(&pool), client_(std::move(client)) {}
    Lease(Lease&&) = default;
    Lease& operator=(Lease&&) = default;
    ~Lease() {
      if (client_) pool_->release(std::move(client_));
    }
    httplib::Client& operator*() { return *client_; }
    httplib::Client* operator->() { return client_.get(); }

   private:
    HttpPool* pool_;
    std::unique_ptr<httplib::Client> client_;
  };

  Lease acquire() {
    {
      std::lock_guard lock(mutex_);
      if (!idle_.empty()) {
        auto client = std::move(idle_.back());
        idle_.pop_back();
        return Lease(*this, std::move(client));
      }
    }
    return Lease(*this, make_client(url_, timeout_));
  }

  const ParsedUrl& url() const { return url_; }

 private:
  void release(std::unique_ptr<httplib::Client> client) {
    std::lock_guard lock(mutex_);
    if (idle_.size() < kMaxIdle) idle_.push_back(std::move(client));
  }

  static constexpr std::size_t kMaxIdle = 16;
  ParsedUrl url_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
};

}  // namespace biasscope::detail
