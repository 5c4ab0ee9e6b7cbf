"""Discounted evaluation as an average-reward problem.

Mixing every transition kernel row with a (1 - gamma) restart to the
initial distribution turns the normalized discounted value of a policy
into the plain average reward of the modified chain.  This script
checks the two against each other on ModelWin and a random MDP.
"""

from bbope.envs import model_win, model_win_policy, random_tabular_mdp
from bbope.mdp import TabularPolicy, discount_to_average
from bbope.oracle import exact_average_reward, exact_discounted_value
from bbope.rng import make_rng


def main():
    rng = make_rng(7)
    random_mdp = random_tabular_mdp(5, 3, seed=7)
    table = rng.uniform(0.1, 1.0, size=(5, 3))
    cases = [
        ("model_win", model_win(), model_win_policy(0.9)),
        ("random-5x3", random_mdp, TabularPolicy(table / table.sum(axis=1, keepdims=True))),
    ]
    for name, mdp, policy in cases:
        for gamma in (0.5, 0.9, 0.99):
            discounted = exact_discounted_value(mdp, policy, gamma)
            reduced = exact_average_reward(discount_to_average(mdp, gamma), policy)
            print(
                f"{name:<10} gamma={gamma:<5} discounted {discounted:+.10f}  "
                f"reduced-chain average {reduced:+.10f}  gap {abs(discounted - reduced):.2e}"
            )


if __name__ == "__main__":
    main()
