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

#include <coalition_cdn/line_server.hpp>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace coalition_cdn::orchestrator {

namespace {

constexpr std::string_view unix_prefix = "unix:";

[[noreturn]] void fail(std::string const& what)
{
	throw std::runtime_error(what + ": " + std::strerror(errno));
}

sockaddr_un unix_address(std::string const& path)
{
	sockaddr_un addr{};
	addr.sun_family = AF_UNIX;
	if (path.empty() || path.size() >= sizeof(addr.sun_path))
	{
		throw std::invalid_argument("bad unix socket path '" + path + "'");
	}
	std::memcpy(addr.sun_path, path.data(), path.size());
	return addr;
}

std::pair<std::string, std::string> split_host_port(std::string const& address)
{
	auto colon = address.rfind(':');
	if (colon == std::string::npos || colon + 1 == address.size())
	{
		throw std::invalid_argument("listen address must be host:port or unix:/path, got '" + address + "'");
	}
	std::string host = address.substr(0, colon);
	if (host.size() >= 2 && host.front() == '[' && host.back() == ']')
	{
		host = host.substr(1, host.size() - 2);
	}
	return {host, address.substr(colon + 1)};
}

addrinfo* resolve(std::string const& address, bool passive)
{
	auto [host, port] = split_host_port(address);
	addrinfo hints{};
	hints.ai_family = AF_UNSPEC;
	hints.ai_socktype = SOCK_STREAM;
	hints.ai_flags = passive ? AI_PASSIVE : 0;
	addrinfo* res = nullptr;
	int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res);
	if (rc != 0)
	{
		throw std::runtime_error("cannot resolve '" + address + "': " + gai_strerror(rc));
	}
	return res;
}

bool send_all(int fd, std::string_view data)
{
	while (!data.empty())
	{
		ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
		if (n < 0 && errno == EINTR)
		{
			continue;
		}
		if (n <= 0)
		{
			return false;
		}
		data.remove_prefix(static_cast<std::size_t>(n));
	}
	return true;
}

} // namespace

LineServer::LineServer(Orchestrator& orch, std::string const& listen) : orch_(orch)
{
	if (listen.starts_with(unix_prefix))
	{
		unix_path_ = listen.substr(unix_prefix.size());
		sockaddr_un addr = unix_address(unix_path_);
		listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
		if (listen_fd_ < 0)
		{
			fail("socket");
		}
		::unlink(unix_path_.c_str());
		if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
		{
			int saved = errno;
			::close(listen_fd_);
			errno = saved;
			fail("bind " + listen);
		}
	}
	else
	{
		addrinfo* res = resolve(listen, true);
		for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next)
		{
			int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
			if (fd < 0)
			{
				continue;
			}
			int one = 1;
			::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
			if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0)
			{
				listen_fd_ = fd;
				break;
			}
			::close(fd);
		}
		freeaddrinfo(res);
		if (listen_fd_ < 0)
		{
			fail("bind " + listen);
		}
		sockaddr_storage bound{};
		socklen_t len = sizeof(bound);
		::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
		if (bound.ss_family == AF_INET)
		{
			port_ = ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
		}
		else if (bound.ss_family == AF_INET6)
		{
			port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
		}
	}

	if (::listen(listen_fd_, 64) != 0)
	{
		int saved = errno;
		::close(listen_fd_);
		errno = saved;
		fail("listen " + listen);
	}
	acceptor_ = std::thread([this] { accept_loop(); });
}

LineServer::~LineServer()
{
	stop();
}

void LineServer::stop()
{
	if (stopping_.exchange(true))
	{
		return;
	}
	// shutdown() wakes the blocked accept() and recv() calls.
	::shutdown(listen_fd_, SHUT_RDWR);
	if (acceptor_.joinable())
	{
		acceptor_.join();
	}
	::close(listen_fd_);

	std::lock_guard lock(conns_mutex_);
	for (auto& conn : conns_)
	{
		::shutdown(conn->fd, SHUT_RDWR);
	}
	for (auto& conn : conns_)
	{
		conn->worker.join();
		::close(conn->fd);
	}
	conns_.clear();
	if (!unix_path_.empty())
	{
		::unlink(unix_path_.c_str());
	}
}

void LineServer::reap_finished()
{
	for (auto it = conns_.begin(); it != conns_.end();)
	{
		if ((*it)->finished)
		{
			(*it)->worker.join();
			::close((*it)->fd);
			it = conns_.erase(it);
		}
		else
		{
			++it;
		}
	}
}

void LineServer::accept_loop()
{
	while (!stopping_)
	{
		int fd = ::accept(listen_fd_, nullptr, nullptr);
		if (fd < 0)
		{
			if (errno == EINTR || errno == ECONNABORTED)
			{
				continue;
			}
			return;
		}
		std::lock_guard lock(conns_mutex_);
		if (stopping_)
		{
			::close(fd);
			return;
		}
		reap_finished();
		auto conn = std::make_unique<Connection>();
		conn->fd = fd;
		Connection& ref = *conn;
		conns_.push_back(std::move(conn));
		ref.worker = std::thread([this, &ref] { serve(ref); });
	}
}

void LineServer::serve(Connection& conn)
{
	std::string line;
	bool overflow = false;
	char buf[4096];
	while (true)
	{
		ssize_t n = ::recv(conn.fd, buf, sizeof(buf), 0);
		if (n < 0 && errno == EINTR)
		{
			continue;
		}
		if (n <= 0)
		{
			break;
		}
		bool ok = true;
		for (ssize_t i = 0; i < n && ok; ++i)
		{
			char ch = buf[i];
			if (ch == '\n')
			{
				if (overflow)
				{
					overflow = false;
				}
				else
				{
					line += '\n';
					ok = send_all(conn.fd, orch_.handle_request(line));
				}
				line.clear();
				continue;
			}
			if (overflow)
			{
				continue;
			}
			line += ch;
			if (line.size() >= max_request_bytes)
			{
				// No room left for the newline: answer now, drop the tail.
				ok = send_all(conn.fd, "ERR BADREQ\n");
				overflow = true;
				line.clear();
			}
		}
		if (!ok)
		{
			break;
		}
	}
	conn.finished = true;
}

int connect_to(std::string const& address)
{
	if (address.starts_with(unix_prefix))
	{
		sockaddr_un addr = unix_address(address.substr(unix_prefix.size()));
		int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
		if (fd < 0)
		{
			fail("socket");
		}
		if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
		{
			int saved = errno;
			::close(fd);
			errno = saved;
			fail("connect " + address);
		}
		return fd;
	}
	addrinfo* res = resolve(address, false);
	int fd = -1;
	for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next)
	{
		fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
		if (fd < 0)
		{
			continue;
		}
		if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
		{
			break;
		}
		::close(fd);
		fd = -1;
	}
	freeaddrinfo(res);
	if (fd < 0)
	{
		fail("connect " + address);
	}
	return fd;
}

} // namespace coalition_cdn::orchestrator
