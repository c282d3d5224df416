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

#include <coalition_cdn/engine.hpp>

#include <algorithm>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace coalition_cdn::game {

namespace {

auto by_player_id = [](PlayerRef const& a, PlayerRef const& b) { return a.id < b.id; };

std::vector<PlayerRef>::const_iterator lower_bound_id(std::vector<PlayerRef> const& v, PlayerId const& id)
{
	return std::lower_bound(v.begin(), v.end(), id,
	                        [](PlayerRef const& p, PlayerId const& key) { return p.id < key; });
}

void require_positive_lambda(PlayerRef const& p)
{
	if (p.lambda <= 0)
	{
		throw std::invalid_argument("player '" + p.id.value + "' has non-positive bitrate");
	}
}

} // namespace

// Coalition ------------------------------------------------------------------

Coalition::Coalition(ServerId server_id, Kbps bandwidth, std::vector<PlayerRef> members)
	: server_id_(std::move(server_id)), bandwidth_(bandwidth), members_(std::move(members))
{
	if (bandwidth_ <= 0)
	{
		throw std::invalid_argument("server '" + server_id_.value + "' has non-positive bandwidth");
	}
	std::sort(members_.begin(), members_.end(), by_player_id);
	for (std::size_t i = 0; i < members_.size(); ++i)
	{
		require_positive_lambda(members_[i]);
		if (i > 0 && members_[i - 1].id == members_[i].id)
		{
			throw std::invalid_argument("duplicate player '" + members_[i].id.value + "' in server '"
			                            + server_id_.value + "'");
		}
		load_ += members_[i].lambda;
	}
}

bool Coalition::contains(PlayerId const& id) const
{
	auto it = lower_bound_id(members_, id);
	return it != members_.end() && it->id == id;
}

std::optional<PlayerRef> Coalition::find(PlayerId const& id) const
{
	auto it = lower_bound_id(members_, id);
	if (it != members_.end() && it->id == id)
	{
		return *it;
	}
	return std::nullopt;
}

void Coalition::insert(PlayerRef player)
{
	require_positive_lambda(player);
	auto it = lower_bound_id(members_, player.id);
	if (it != members_.end() && it->id == player.id)
	{
		throw PreconditionError("player '" + player.id.value + "' already in server '" + server_id_.value + "'");
	}
	load_ += player.lambda;
	members_.insert(it, std::move(player));
}

PlayerRef Coalition::erase(PlayerId const& id)
{
	auto it = lower_bound_id(members_, id);
	if (it == members_.end() || it->id != id)
	{
		throw PreconditionError("player '" + id.value + "' not in server '" + server_id_.value + "'");
	}
	PlayerRef out = *it;
	load_ -= out.lambda;
	members_.erase(it);
	return out;
}

// Collection -----------------------------------------------------------------

Collection::Collection(std::vector<Coalition> coalitions) : coalitions_(std::move(coalitions))
{
	std::sort(coalitions_.begin(), coalitions_.end(),
	          [](Coalition const& a, Coalition const& b) { return a.server_id() < b.server_id(); });

	std::set<PlayerId> seen;
	for (std::size_t i = 0; i < coalitions_.size(); ++i)
	{
		if (i > 0 && coalitions_[i - 1].server_id() == coalitions_[i].server_id())
		{
			throw std::invalid_argument("duplicate server '" + coalitions_[i].server_id().value + "'");
		}
		for (PlayerRef const& p : coalitions_[i].members())
		{
			if (!seen.insert(p.id).second)
			{
				throw std::invalid_argument("player '" + p.id.value + "' belongs to more than one server");
			}
		}
	}
}

std::size_t Collection::player_count() const noexcept
{
	std::size_t n = 0;
	for (Coalition const& c : coalitions_)
	{
		n += c.size();
	}
	return n;
}

Coalition const& Collection::at(ServerId const& id) const
{
	auto idx = index_of(id);
	if (!idx)
	{
		throw PreconditionError("unknown server '" + id.value + "'");
	}
	return coalitions_[*idx];
}

std::optional<std::size_t> Collection::index_of(ServerId const& id) const
{
	auto it = std::lower_bound(coalitions_.begin(), coalitions_.end(), id,
	                           [](Coalition const& c, ServerId const& key) { return c.server_id() < key; });
	if (it == coalitions_.end() || it->server_id() != id)
	{
		return std::nullopt;
	}
	return static_cast<std::size_t>(it - coalitions_.begin());
}

std::optional<std::size_t> Collection::locate(PlayerId const& id) const
{
	for (std::size_t i = 0; i < coalitions_.size(); ++i)
	{
		if (coalitions_[i].contains(id))
		{
			return i;
		}
	}
	return std::nullopt;
}

std::vector<PlayerRef> Collection::players() const
{
	std::vector<PlayerRef> out;
	out.reserve(player_count());
	for (Coalition const& c : coalitions_)
	{
		out.insert(out.end(), c.members().begin(), c.members().end());
	}
	std::sort(out.begin(), out.end(), by_player_id);
	return out;
}

void Collection::move(PlayerId const& player, std::size_t from, std::size_t to)
{
	if (from == to)
	{
		throw PreconditionError("source and destination server are the same");
	}
	Coalition& src = coalitions_.at(from);
	Coalition& dst = coalitions_.at(to);
	dst.insert(src.erase(player));
}

// GameConfig -----------------------------------------------------------------

void GameConfig::validate() const
{
	if (xi <= 0)
	{
		throw std::invalid_argument("xi must be positive (got " + std::to_string(xi) + ")");
	}
}

std::size_t GameConfig::effective_max_transfers(Collection const& col) const
{
	if (max_transfers > 0)
	{
		return max_transfers;
	}
	return std::max<std::size_t>(1, 10 * col.player_count() * col.size());
}

// Operations -----------------------------------------------------------------

Kbps payoff(Coalition const& c) noexcept
{
	return c.bandwidth() - c.load();
}

Kbps payoff_after_join(Coalition const& c, PlayerRef const& p)
{
	if (c.contains(p.id))
	{
		throw PreconditionError("player '" + p.id.value + "' already in server '" + c.server_id().value + "'");
	}
	return payoff(c) - p.lambda;
}

namespace {

// Index-based core shared by check_migration and stabilize.
std::optional<TransferEvent> try_transfer(Collection& col, PlayerRef const& p, std::size_t src, std::size_t dst,
                                          Kbps xi)
{
	Kbps const before = payoff(col.at(src));
	Kbps const after = payoff_after_join(col.at(dst), p);
	if (after - before < xi)
	{
		return std::nullopt;
	}
	TransferEvent ev{p, col.at(src).server_id(), col.at(dst).server_id(), before, after, 0};
	col.move(p.id, src, dst);
	return ev;
}

} // namespace

std::optional<TransferEvent> check_migration(Collection& col, PlayerRef const& p, ServerId const& src,
                                             ServerId const& dst, GameConfig const& cfg)
{
	cfg.validate();
	if (src == dst)
	{
		throw PreconditionError("check_migration: source and destination are both '" + src.value + "'");
	}
	auto si = col.index_of(src);
	auto di = col.index_of(dst);
	if (!si || !di)
	{
		throw PreconditionError("check_migration: unknown server '" + (si ? dst : src).value + "'");
	}
	auto member = col.at(*si).find(p.id);
	if (!member)
	{
		throw PreconditionError("check_migration: player '" + p.id.value + "' is not in '" + src.value + "'");
	}
	return try_transfer(col, *member, *si, *di, cfg.xi);
}

TransferLog stabilize(Collection const& initial, GameConfig const& cfg)
{
	cfg.validate();

	TransferLog log{initial, {}, initial};
	Collection& col = log.final;
	std::size_t const cap = cfg.effective_max_transfers(col);

	bool migrated = true;
	while (migrated)
	{
		migrated = false;
		for (std::size_t i = 0; i < col.size() && !migrated; ++i)
		{
			// Copy: a successful transfer mutates the member list we iterate.
			std::vector<PlayerRef> const members(col.at(i).members().begin(), col.at(i).members().end());
			for (PlayerRef const& p : members)
			{
				for (std::size_t j = 0; j < col.size() && !migrated; ++j)
				{
					if (j == i)
					{
						continue;
					}
					if (auto ev = try_transfer(col, p, i, j, cfg.xi))
					{
						if (log.events.size() == cap)
						{
							std::ostringstream msg;
							msg << "stabilize exceeded max_transfers=" << cap << "; last event #"
							    << log.events.back().sequence << " moved " << log.events.back().player.id
							    << " " << log.events.back().from_server << "->"
							    << log.events.back().to_server;
							throw TransferCapExceeded(msg.str());
						}
						ev->sequence = log.events.size();
						log.events.push_back(std::move(*ev));
						migrated = true;
					}
				}
				if (migrated)
				{
					break;
				}
			}
		}
	}
	return log;
}

bool is_stable(Collection const& col, GameConfig const& cfg)
{
	cfg.validate();
	for (std::size_t i = 0; i < col.size(); ++i)
	{
		Kbps const current = payoff(col.at(i));
		for (PlayerRef const& p : col.at(i).members())
		{
			for (std::size_t j = 0; j < col.size(); ++j)
			{
				if (j != i && payoff_after_join(col.at(j), p) - current >= cfg.xi)
				{
					return false;
				}
			}
		}
	}
	return true;
}

SquaredKbps potential(Collection const& col) noexcept
{
	SquaredKbps total = 0;
	for (Coalition const& c : col.coalitions())
	{
		Kbps const f = payoff(c);
		total += f * f;
	}
	return total;
}

Collection random_collection(std::vector<PlayerRef> players, std::vector<std::pair<ServerId, Kbps>> servers,
                             std::uint64_t seed)
{
	if (servers.empty())
	{
		throw std::invalid_argument("random_collection: no servers");
	}
	std::sort(players.begin(), players.end(), by_player_id);
	std::sort(servers.begin(), servers.end(), [](auto const& a, auto const& b) { return a.first < b.first; });

	std::uint64_t const n = servers.size();
	std::uint64_t const limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
	std::mt19937_64 rng(seed);

	std::vector<std::vector<PlayerRef>> buckets(servers.size());
	for (PlayerRef& p : players)
	{
		std::uint64_t word = rng();
		while (word >= limit)
		{
			word = rng();
		}
		buckets[word % n].push_back(std::move(p));
	}

	std::vector<Coalition> coalitions;
	coalitions.reserve(servers.size());
	for (std::size_t s = 0; s < servers.size(); ++s)
	{
		coalitions.emplace_back(servers[s].first, servers[s].second, std::move(buckets[s]));
	}
	return Collection(std::move(coalitions));
}

Collection replay(Collection const& initial, std::span<TransferEvent const> events)
{
	Collection col = initial;
	for (TransferEvent const& ev : events)
	{
		auto from = col.index_of(ev.from_server);
		auto to = col.index_of(ev.to_server);
		if (!from || !to)
		{
			throw PreconditionError("replay: event #" + std::to_string(ev.sequence) + " names an unknown server");
		}
		col.move(ev.player.id, *from, *to);
	}
	return col;
}

} // namespace coalition_cdn::game
