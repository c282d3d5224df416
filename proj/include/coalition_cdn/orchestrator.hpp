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

#ifndef COALITION_CDN_ORCHESTRATOR_HPP
#define COALITION_CDN_ORCHESTRATOR_HPP

#include <coalition_cdn/engine.hpp>
#include <coalition_cdn/ids.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Control plane: which server each client should fetch its next segment from.
namespace coalition_cdn::orchestrator {

using Kbps = game::Kbps;

class UnknownServer : public std::invalid_argument
{
public:
	using std::invalid_argument::invalid_argument;
};

class ServerRegistry
{
public:
	ServerRegistry() = default;
	explicit ServerRegistry(std::vector<std::pair<ServerId, Kbps>> servers);

	/// `server_id bandwidth_kbps` per line; blank lines and `#` comments ignored.
	static ServerRegistry parse(std::string_view text);
	static ServerRegistry read_file(std::filesystem::path const& path);

	bool contains(ServerId const& id) const;
	Kbps bandwidth(ServerId const& id) const;
	std::vector<std::pair<ServerId, Kbps>> const& servers() const noexcept { return servers_; }

private:
	std::vector<std::pair<ServerId, Kbps>> servers_;
};

struct AssignmentStore
{
	std::map<ClientId, ServerId> assignments;
	std::uint64_t version{0};

	friend bool operator==(AssignmentStore const&, AssignmentStore const&) = default;
};

std::optional<ServerId> get_assignment(AssignmentStore const& store, ClientId const& client);

/// Returns the new version. Throws UnknownServer (store unchanged) when
/// \a server is not registered.
std::uint64_t set_assignment(AssignmentStore& store, ServerRegistry const& registry, ClientId const& client,
                             ServerId const& server);

/// Collection view of the store: every registered server, members carrying \a lambdas.
game::Collection to_collection(AssignmentStore const& store, ServerRegistry const& registry,
                               std::map<ClientId, Kbps> const& lambdas);

/**
 * Stabilizes the current assignment and writes every transfer back in log order.
 *
 * \a lambdas must name exactly the clients in the store. On any error
 * (mismatch, invalid bitrate, transfer cap) the store is left untouched.
 */
game::TransferLog run_game(AssignmentStore& store, ServerRegistry const& registry,
                           std::map<ClientId, Kbps> const& lambdas, game::GameConfig const& cfg);

/// `client server` lines sorted by client id, then `# version <n>`.
std::string to_snapshot_text(AssignmentStore const& store);
AssignmentStore parse_snapshot_text(std::string_view text);

/// Longest accepted request line, newline included.
inline constexpr std::size_t max_request_bytes = 256;

/**
 * Thread-safe store front end.
 *
 * Readers share the lock; SET and run_game take it exclusively, so a reader
 * issued while a game runs blocks until every transfer has been written and
 * then observes the final assignment.
 */
class Orchestrator
{
public:
	explicit Orchestrator(ServerRegistry registry, AssignmentStore initial = {},
	                      std::optional<std::filesystem::path> snapshot_path = std::nullopt);

	std::optional<ServerId> get(ClientId const& client) const;
	std::uint64_t set(ClientId const& client, ServerId const& server);
	AssignmentStore snapshot() const;
	game::TransferLog run_game(std::map<ClientId, Kbps> const& lambdas, game::GameConfig const& cfg);

	/**
	 * One protocol exchange. \a line may carry its terminating newline.
	 *
	 *   GET <client>           -> <server> | ERR NOTFOUND
	 *   SET <client> <server>  -> OK <version> | ERR NOSERVER
	 *   DUMP                   -> `<client> <server>` lines, then END
	 *   anything else          -> ERR BADREQ
	 *
	 * Every response line ends with '\n'.
	 */
	std::string handle_request(std::string_view line);

	ServerRegistry const& registry() const noexcept { return registry_; }

private:
	void persist_locked() const;

	ServerRegistry registry_;
	AssignmentStore store_;
	std::optional<std::filesystem::path> snapshot_path_;
	mutable std::shared_mutex mutex_;
};

/// `client kbps` per line, as reported by players.
std::map<ClientId, Kbps> parse_lambdas(std::string_view text);

} // namespace coalition_cdn::orchestrator

#endif // COALITION_CDN_ORCHESTRATOR_HPP
