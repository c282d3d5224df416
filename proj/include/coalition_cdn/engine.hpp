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

#ifndef COALITION_CDN_ENGINE_HPP
#define COALITION_CDN_ENGINE_HPP

#include <coalition_cdn/ids.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

/**
 * \brief Coalition formation game for client-to-server assignment.
 *
 * Servers are coalitions, streaming clients are players. The value of a
 * coalition is the bandwidth left on its server once every member's
 * requested bitrate has been subtracted. Players move one at a time towards
 * coalitions with more room until no move gains at least \c xi.
 *
 * All quantities are integer Kbps so every comparison is exact.
 */
namespace coalition_cdn::game {

using Kbps = std::int64_t;

/// Potential values are sums of squared Kbps.
using SquaredKbps = std::int64_t;

/// A precondition of an engine call was violated by the caller.
class PreconditionError : public std::logic_error
{
public:
	using std::logic_error::logic_error;
};

/// stabilize() hit GameConfig::max_transfers before reaching a stable collection.
class TransferCapExceeded : public std::runtime_error
{
public:
	using std::runtime_error::runtime_error;
};

struct PlayerRef
{
	PlayerId id;
	Kbps lambda{0};

	friend bool operator==(PlayerRef const&, PlayerRef const&) = default;
};

/// The set of players served by one server.
class Coalition
{
public:
	Coalition(ServerId server_id, Kbps bandwidth, std::vector<PlayerRef> members = {});

	ServerId const& server_id() const noexcept { return server_id_; }
	Kbps bandwidth() const noexcept { return bandwidth_; }

	/// Members in ascending player id order.
	std::span<PlayerRef const> members() const noexcept { return members_; }
	std::size_t size() const noexcept { return members_.size(); }
	bool empty() const noexcept { return members_.empty(); }

	/// Sum of member bitrates.
	Kbps load() const noexcept { return load_; }

	bool contains(PlayerId const& id) const;
	std::optional<PlayerRef> find(PlayerId const& id) const;

	void insert(PlayerRef player);
	PlayerRef erase(PlayerId const& id);

	friend bool operator==(Coalition const&, Coalition const&) = default;

private:
	ServerId server_id_;
	Kbps bandwidth_;
	std::vector<PlayerRef> members_;
	Kbps load_{0};
};

/// A partition of all players over a fixed set of coalitions, ordered by server id.
class Collection
{
public:
	Collection() = default;
	explicit Collection(std::vector<Coalition> coalitions);

	std::span<Coalition const> coalitions() const noexcept { return coalitions_; }
	std::size_t size() const noexcept { return coalitions_.size(); }
	std::size_t player_count() const noexcept;

	Coalition const& at(std::size_t index) const { return coalitions_.at(index); }
	Coalition const& at(ServerId const& id) const;

	std::optional<std::size_t> index_of(ServerId const& id) const;

	/// Index of the coalition holding \a id, if any.
	std::optional<std::size_t> locate(PlayerId const& id) const;

	/// All players, ascending by id.
	std::vector<PlayerRef> players() const;

	/// Moves a player between coalitions. Throws PreconditionError when the
	/// player is not in \a from or the indices coincide.
	void move(PlayerId const& player, std::size_t from, std::size_t to);

	friend bool operator==(Collection const&, Collection const&) = default;

private:
	std::vector<Coalition> coalitions_;
};

struct GameConfig
{
	static constexpr Kbps default_xi = 100;

	Kbps xi{default_xi};

	/// Zero selects 10 x players x coalitions at stabilize time.
	std::size_t max_transfers{0};

	/// Throws std::invalid_argument unless xi > 0.
	void validate() const;

	std::size_t effective_max_transfers(Collection const& col) const;
};

struct TransferEvent
{
	PlayerRef player;
	ServerId from_server;
	ServerId to_server;
	Kbps payoff_src_before{0};
	Kbps payoff_dst_after{0};
	std::size_t sequence{0};

	friend bool operator==(TransferEvent const&, TransferEvent const&) = default;
};

struct TransferLog
{
	Collection initial;
	std::vector<TransferEvent> events;
	Collection final;

	friend bool operator==(TransferLog const&, TransferLog const&) = default;
};

/// Residual bandwidth of a server: B - sum of member bitrates. Negative when oversubscribed.
Kbps payoff(Coalition const& c) noexcept;

/// payoff(c) as it would be with \a p added. \a p must not already be a member.
Kbps payoff_after_join(Coalition const& c, PlayerRef const& p);

/**
 * Tests whether \a p should leave \a src for \a dst and applies the move if so.
 *
 * The source payoff is taken with \a p still counted, the destination payoff
 * with \a p already added. The move happens when the difference reaches
 * \c cfg.xi. Returns the event on a move, nothing otherwise (and \a col is
 * untouched). The returned event's sequence is 0; stabilize() renumbers it.
 */
std::optional<TransferEvent> check_migration(Collection& col, PlayerRef const& p,
                                             ServerId const& src, ServerId const& dst,
                                             GameConfig const& cfg);

/**
 * Runs transfers until the collection is stable.
 *
 * Scan order: coalitions by ascending server id, their members by ascending
 * player id, candidate destinations by ascending server id. The scan restarts
 * from the top after every applied transfer and stops after a full pass with
 * no transfer.
 */
TransferLog stabilize(Collection const& initial, GameConfig const& cfg);

/// True when no single player move gains at least cfg.xi.
bool is_stable(Collection const& col, GameConfig const& cfg);

/// Sum over coalitions of payoff squared. Strictly decreases with every transfer when xi > 0.
SquaredKbps potential(Collection const& col) noexcept;

/**
 * Uniform random assignment of players to servers.
 *
 * Players are taken in ascending id order and servers are indexed in
 * ascending id order. For each player one 64-bit word is drawn from
 * std::mt19937_64 seeded with \a seed; words at or above the largest multiple
 * of the server count are rejected and redrawn; the server index is the word
 * modulo the server count.
 */
Collection random_collection(std::vector<PlayerRef> players,
                             std::vector<std::pair<ServerId, Kbps>> servers,
                             std::uint64_t seed);

/// Applies log.events to log.initial.
Collection replay(Collection const& initial, std::span<TransferEvent const> events);

} // namespace coalition_cdn::game

#endif // COALITION_CDN_ENGINE_HPP
