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

#include <coalition_cdn/orchestrator.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <mutex>
#include <sstream>

namespace coalition_cdn::orchestrator {

namespace {

std::vector<std::string_view> split_lines(std::string_view text)
{
	std::vector<std::string_view> out;
	while (!text.empty())
	{
		auto nl = text.find('\n');
		std::string_view line = text.substr(0, nl);
		if (!line.empty() && line.back() == '\r')
		{
			line.remove_suffix(1);
		}
		out.push_back(line);
		if (nl == std::string_view::npos)
		{
			break;
		}
		text.remove_prefix(nl + 1);
	}
	return out;
}

// Whitespace-separated fields of a data file line; empty for blanks and comments.
std::vector<std::string_view> fields(std::string_view line)
{
	std::vector<std::string_view> out;
	std::size_t i = 0;
	while (i < line.size())
	{
		while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
		{
			++i;
		}
		if (i < line.size() && line[i] == '#')
		{
			break;
		}
		std::size_t j = i;
		while (j < line.size() && line[j] != ' ' && line[j] != '\t')
		{
			++j;
		}
		if (j > i)
		{
			out.push_back(line.substr(i, j - i));
		}
		i = j;
	}
	return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what)
{
	T value{};
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
	if (ec != std::errc{} || ptr != s.data() + s.size())
	{
		throw std::invalid_argument(std::string(what) + ": not a number: '" + std::string(s) + "'");
	}
	return value;
}

std::string read_all(std::filesystem::path const& path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
	{
		throw std::runtime_error("cannot open '" + path.string() + "'");
	}
	std::stringstream buf;
	buf << in.rdbuf();
	return buf.str();
}

// Printable ASCII other than space, or any byte of a multi-byte UTF-8 sequence.
bool valid_token(std::string_view t)
{
	if (t.empty())
	{
		return false;
	}
	return std::all_of(t.begin(), t.end(), [](char ch) {
		auto const c = static_cast<unsigned char>(ch);
		return (c > 0x20 && c < 0x7f) || c >= 0x80;
	});
}

} // namespace

// ServerRegistry ---------------------------------------------------------------

ServerRegistry::ServerRegistry(std::vector<std::pair<ServerId, Kbps>> servers) : servers_(std::move(servers))
{
	std::sort(servers_.begin(), servers_.end());
	for (std::size_t i = 0; i < servers_.size(); ++i)
	{
		if (servers_[i].second <= 0)
		{
			throw std::invalid_argument("registry: server '" + servers_[i].first.value
			                            + "' has non-positive bandwidth");
		}
		if (i > 0 && servers_[i].first == servers_[i - 1].first)
		{
			throw std::invalid_argument("registry: duplicate server '" + servers_[i].first.value + "'");
		}
	}
}

ServerRegistry ServerRegistry::parse(std::string_view text)
{
	std::vector<std::pair<ServerId, Kbps>> servers;
	for (std::string_view line : split_lines(text))
	{
		auto f = fields(line);
		if (f.empty())
		{
			continue;
		}
		if (f.size() != 2)
		{
			throw std::invalid_argument("registry: expected `server_id bandwidth_kbps`, got '" + std::string(line)
			                            + "'");
		}
		servers.emplace_back(ServerId(std::string(f[0])), parse_number<Kbps>(f[1], "registry"));
	}
	return ServerRegistry(std::move(servers));
}

ServerRegistry ServerRegistry::read_file(std::filesystem::path const& path)
{
	return parse(read_all(path));
}

bool ServerRegistry::contains(ServerId const& id) const
{
	return std::any_of(servers_.begin(), servers_.end(), [&](auto const& s) { return s.first == id; });
}

Kbps ServerRegistry::bandwidth(ServerId const& id) const
{
	for (auto const& [sid, bw] : servers_)
	{
		if (sid == id)
		{
			return bw;
		}
	}
	throw UnknownServer("unknown server '" + id.value + "'");
}

// Store operations -------------------------------------------------------------

std::optional<ServerId> get_assignment(AssignmentStore const& store, ClientId const& client)
{
	auto it = store.assignments.find(client);
	if (it == store.assignments.end())
	{
		return std::nullopt;
	}
	return it->second;
}

std::uint64_t set_assignment(AssignmentStore& store, ServerRegistry const& registry, ClientId const& client,
                             ServerId const& server)
{
	if (!registry.contains(server))
	{
		throw UnknownServer("unknown server '" + server.value + "'");
	}
	store.assignments[client] = server;
	return ++store.version;
}

game::Collection to_collection(AssignmentStore const& store, ServerRegistry const& registry,
                               std::map<ClientId, Kbps> const& lambdas)
{
	std::map<ServerId, std::vector<game::PlayerRef>> members;
	for (auto const& [client, server] : store.assignments)
	{
		auto it = lambdas.find(client);
		if (it == lambdas.end())
		{
			throw std::invalid_argument("no bitrate reported for client '" + client.value + "'");
		}
		members[server].push_back({client, it->second});
	}

	std::vector<game::Coalition> coalitions;
	for (auto const& [id, bw] : registry.servers())
	{
		coalitions.emplace_back(id, bw, std::move(members[id]));
		members.erase(id);
	}
	if (!members.empty())
	{
		throw UnknownServer("store names unregistered server '" + members.begin()->first.value + "'");
	}
	return game::Collection(std::move(coalitions));
}

game::TransferLog run_game(AssignmentStore& store, ServerRegistry const& registry,
                           std::map<ClientId, Kbps> const& lambdas, game::GameConfig const& cfg)
{
	if (lambdas.size() != store.assignments.size())
	{
		throw std::invalid_argument("run_game: " + std::to_string(lambdas.size()) + " bitrates for "
		                            + std::to_string(store.assignments.size()) + " clients");
	}
	game::TransferLog log = game::stabilize(to_collection(store, registry, lambdas), cfg);

	AssignmentStore next = store;
	for (game::TransferEvent const& ev : log.events)
	{
		set_assignment(next, registry, ev.player.id, ev.to_server);
	}
	store = std::move(next);
	return log;
}

std::string to_snapshot_text(AssignmentStore const& store)
{
	std::string out;
	for (auto const& [client, server] : store.assignments)
	{
		out += client.value;
		out += ' ';
		out += server.value;
		out += '\n';
	}
	out += "# version " + std::to_string(store.version) + "\n";
	return out;
}

AssignmentStore parse_snapshot_text(std::string_view text)
{
	AssignmentStore store;
	for (std::string_view line : split_lines(text))
	{
		constexpr std::string_view version_tag = "# version ";
		if (line.starts_with(version_tag))
		{
			store.version = parse_number<std::uint64_t>(line.substr(version_tag.size()), "store snapshot");
			continue;
		}
		auto f = fields(line);
		if (f.empty())
		{
			continue;
		}
		if (f.size() != 2)
		{
			throw std::invalid_argument("store snapshot: expected `client server`, got '" + std::string(line) + "'");
		}
		if (!store.assignments.emplace(ClientId(std::string(f[0])), ServerId(std::string(f[1]))).second)
		{
			throw std::invalid_argument("store snapshot: client '" + std::string(f[0]) + "' listed twice");
		}
	}
	return store;
}

std::map<ClientId, Kbps> parse_lambdas(std::string_view text)
{
	std::map<ClientId, Kbps> out;
	for (std::string_view line : split_lines(text))
	{
		auto f = fields(line);
		if (f.empty())
		{
			continue;
		}
		if (f.size() != 2)
		{
			throw std::invalid_argument("lambdas: expected `client kbps`, got '" + std::string(line) + "'");
		}
		out[ClientId(std::string(f[0]))] = parse_number<Kbps>(f[1], "lambdas");
	}
	return out;
}

// Orchestrator -----------------------------------------------------------------

Orchestrator::Orchestrator(ServerRegistry registry, AssignmentStore initial,
                           std::optional<std::filesystem::path> snapshot_path)
	: registry_(std::move(registry)), store_(std::move(initial)), snapshot_path_(std::move(snapshot_path))
{
	for (auto const& [client, server] : store_.assignments)
	{
		if (!registry_.contains(server))
		{
			throw UnknownServer("store maps '" + client.value + "' to unregistered server '" + server.value + "'");
		}
	}
}

std::optional<ServerId> Orchestrator::get(ClientId const& client) const
{
	std::shared_lock lock(mutex_);
	return get_assignment(store_, client);
}

std::uint64_t Orchestrator::set(ClientId const& client, ServerId const& server)
{
	std::unique_lock lock(mutex_);
	std::uint64_t const v = set_assignment(store_, registry_, client, server);
	persist_locked();
	return v;
}

AssignmentStore Orchestrator::snapshot() const
{
	std::shared_lock lock(mutex_);
	return store_;
}

game::TransferLog Orchestrator::run_game(std::map<ClientId, Kbps> const& lambdas, game::GameConfig const& cfg)
{
	std::unique_lock lock(mutex_);
	game::TransferLog log = orchestrator::run_game(store_, registry_, lambdas, cfg);
	if (!log.events.empty())
	{
		persist_locked();
	}
	return log;
}

void Orchestrator::persist_locked() const
{
	if (!snapshot_path_)
	{
		return;
	}
	auto tmp = *snapshot_path_;
	tmp += ".tmp";
	{
		std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
		if (!out)
		{
			throw std::runtime_error("cannot write store snapshot '" + tmp.string() + "'");
		}
		out << to_snapshot_text(store_);
	}
	std::filesystem::rename(tmp, *snapshot_path_);
}

std::string Orchestrator::handle_request(std::string_view line)
{
	static std::string const bad = "ERR BADREQ\n";

	if (line.size() > max_request_bytes)
	{
		return bad;
	}
	if (!line.empty() && line.back() == '\n')
	{
		line.remove_suffix(1);
	}
	if (line.size() >= max_request_bytes)
	{
		return bad;
	}

	std::vector<std::string_view> tokens;
	std::size_t start = 0;
	while (true)
	{
		auto sp = line.find(' ', start);
		tokens.push_back(line.substr(start, sp == std::string_view::npos ? std::string_view::npos : sp - start));
		if (sp == std::string_view::npos)
		{
			break;
		}
		start = sp + 1;
	}
	if (!std::all_of(tokens.begin(), tokens.end(), valid_token))
	{
		return bad;
	}

	std::string_view const verb = tokens[0];
	if (verb == "GET" && tokens.size() == 2)
	{
		auto server = get(ClientId(std::string(tokens[1])));
		return server ? server->value + "\n" : "ERR NOTFOUND\n";
	}
	if (verb == "SET" && tokens.size() == 3)
	{
		try
		{
			return "OK " + std::to_string(set(ClientId(std::string(tokens[1])), ServerId(std::string(tokens[2]))))
			       + "\n";
		}
		catch (UnknownServer const&)
		{
			return "ERR NOSERVER\n";
		}
	}
	if (verb == "DUMP" && tokens.size() == 1)
	{
		std::shared_lock lock(mutex_);
		std::string out;
		for (auto const& [client, server] : store_.assignments)
		{
			out += client.value + " " + server.value + "\n";
		}
		out += "END\n";
		return out;
	}
	return bad;
}

} // namespace coalition_cdn::orchestrator
