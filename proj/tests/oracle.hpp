// Independent reference implementations used only by tests.
//
// Nothing here calls into the library: payoffs are recomputed from scratch
// over plain index vectors so the checks do not share code paths with the
// engine they verify.

#ifndef COALITION_CDN_TESTS_ORACLE_HPP
#define COALITION_CDN_TESTS_ORACLE_HPP

#include <coalition_cdn/engine.hpp>

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace oracle {

/// Servers and players by index. assign[p] is the server index of player p.
struct Instance
{
	std::vector<std::int64_t> bandwidth;
	std::vector<std::int64_t> lambda;
	std::vector<int> assign;
};

inline std::string player_name(std::size_t i)
{
	char buf[32];
	std::snprintf(buf, sizeof buf, "p%03zu", i);
	return buf;
}

inline std::string server_name(std::size_t i)
{
	char buf[32];
	std::snprintf(buf, sizeof buf, "s%02zu", i);
	return buf;
}

inline std::int64_t server_payoff(Instance const& in, std::vector<int> const& assign, int s)
{
	std::int64_t f = in.bandwidth[s];
	for (std::size_t p = 0; p < assign.size(); ++p)
	{
		if (assign[p] == s)
		{
			f -= in.lambda[p];
		}
	}
	return f;
}

/// Every (player, destination) pair, payoffs recomputed per pair.
inline bool stable(Instance const& in, std::vector<int> const& assign, std::int64_t xi)
{
	int const servers = static_cast<int>(in.bandwidth.size());
	for (std::size_t p = 0; p < assign.size(); ++p)
	{
		for (int d = 0; d < servers; ++d)
		{
			if (d == assign[p])
			{
				continue;
			}
			std::int64_t const src = server_payoff(in, assign, assign[p]);
			std::int64_t const dst = server_payoff(in, assign, d) - in.lambda[p];
			if (dst - src >= xi)
			{
				return false;
			}
		}
	}
	return true;
}

/// All xi-stable assignments, by enumerating servers^players vectors.
inline std::vector<std::vector<int>> all_stable(Instance const& in, std::int64_t xi)
{
	std::vector<std::vector<int>> out;
	int const servers = static_cast<int>(in.bandwidth.size());
	std::vector<int> a(in.lambda.size(), 0);
	while (true)
	{
		if (stable(in, a, xi))
		{
			out.push_back(a);
		}
		std::size_t k = 0;
		while (k < a.size() && ++a[k] == servers)
		{
			a[k++] = 0;
		}
		if (k == a.size())
		{
			break;
		}
	}
	return out;
}

struct Move
{
	int player;
	int from;
	int to;
	std::int64_t src_before;
	std::int64_t dst_after;
};

/// Literal first-improvement scan with full restart, one move per pass.
inline std::vector<Move> reference_scan(Instance const& in, std::vector<int>& assign, std::int64_t xi)
{
	std::vector<Move> moves;
	int const servers = static_cast<int>(in.bandwidth.size());
	bool moved = true;
	while (moved)
	{
		moved = false;
		for (int s = 0; s < servers && !moved; ++s)
		{
			for (std::size_t p = 0; p < assign.size() && !moved; ++p)
			{
				if (assign[p] != s)
				{
					continue;
				}
				for (int d = 0; d < servers && !moved; ++d)
				{
					if (d == s)
					{
						continue;
					}
					std::int64_t const a = server_payoff(in, assign, s);
					std::int64_t const b = server_payoff(in, assign, d) - in.lambda[p];
					if (b - a >= xi)
					{
						moves.push_back({static_cast<int>(p), s, d, a, b});
						assign[p] = d;
						moved = true;
					}
				}
			}
		}
	}
	return moves;
}

inline coalition_cdn::game::Collection to_collection(Instance const& in, std::vector<int> const& assign)
{
	using namespace coalition_cdn;
	std::vector<game::Coalition> cs;
	for (std::size_t s = 0; s < in.bandwidth.size(); ++s)
	{
		std::vector<game::PlayerRef> members;
		for (std::size_t p = 0; p < assign.size(); ++p)
		{
			if (assign[p] == static_cast<int>(s))
			{
				members.push_back({PlayerId(player_name(p)), in.lambda[p]});
			}
		}
		cs.emplace_back(ServerId(server_name(s)), in.bandwidth[s], std::move(members));
	}
	return game::Collection(std::move(cs));
}

/// Assignment vector of a collection whose ids follow player_name/server_name.
inline std::vector<int> to_assign(coalition_cdn::game::Collection const& col, std::size_t players)
{
	std::vector<int> a(players, -1);
	for (std::size_t s = 0; s < col.size(); ++s)
	{
		for (auto const& p : col.at(s).members())
		{
			a[std::stoul(p.id.value.substr(1))] = static_cast<int>(std::stoul(col.at(s).server_id().value.substr(1)));
		}
	}
	return a;
}

inline std::int64_t const paper_ladder[] = {1360, 3265, 6117, 9330};

/// Random instance: lambda from the ladder, bandwidth uniform in [1000, 10000].
inline Instance random_instance(std::mt19937_64& rng, std::size_t max_players, std::size_t max_servers)
{
	std::uniform_int_distribution<std::size_t> np(1, max_players);
	std::uniform_int_distribution<std::size_t> ns(1, max_servers);
	std::uniform_int_distribution<int> rung(0, 3);
	std::uniform_int_distribution<std::int64_t> bw(1000, 10000);

	Instance in;
	std::size_t const players = np(rng);
	std::size_t const servers = ns(rng);
	std::uniform_int_distribution<int> pick(0, static_cast<int>(servers) - 1);
	for (std::size_t s = 0; s < servers; ++s)
	{
		in.bandwidth.push_back(bw(rng));
	}
	for (std::size_t p = 0; p < players; ++p)
	{
		in.lambda.push_back(paper_ladder[rung(rng)]);
		in.assign.push_back(pick(rng));
	}
	return in;
}

} // namespace oracle

#endif // COALITION_CDN_TESTS_ORACLE_HPP
