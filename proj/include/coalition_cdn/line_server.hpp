/*
 * Copyright 2026 The coalition-cdn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef COALITION_CDN_LINE_SERVER_HPP
#define COALITION_CDN_LINE_SERVER_HPP

#include <coalition_cdn/orchestrator.hpp>

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace coalition_cdn::orchestrator {

/**
 * Newline-delimited text front end for an Orchestrator.
 *
 * \a listen is either `host:port` (TCP, port 0 picks a free one) or
 * `unix:/path/to/socket`. One thread per connection; a line longer than
 * max_request_bytes gets ERR BADREQ and the rest of it is discarded.
 */
class LineServer
{
public:
	LineServer(Orchestrator& orch, std::string const& listen);
	~LineServer();

	LineServer(LineServer const&) = delete;
	LineServer& operator=(LineServer const&) = delete;

	/// Bound TCP port, 0 for unix sockets.
	std::uint16_t port() const noexcept { return port_; }

	/// Closes the listener and every open connection, then joins all threads.
	void stop();

private:
	struct Connection
	{
		int fd{-1};
		std::thread worker;
		std::atomic<bool> finished{false};
	};

	void accept_loop();
	void serve(Connection& conn);
	void reap_finished();

	Orchestrator& orch_;
	int listen_fd_{-1};
	std::uint16_t port_{0};
	std::string unix_path_;
	std::atomic<bool> stopping_{false};
	std::thread acceptor_;
	std::mutex conns_mutex_;
	std::list<std::unique_ptr<Connection>> conns_;
};

/// Connects to a LineServer address; returns the socket fd. Throws std::runtime_error.
int connect_to(std::string const& address);

} // namespace coalition_cdn::orchestrator

#endif // COALITION_CDN_LINE_SERVER_HPP
