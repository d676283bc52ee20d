"""Writes pointmass_game.jsonl: three short episodes as the browser game exports them
(point-mass motion, mouse-driven sensor, no generator sensor or seed in the header)."""
import json
import math
import random

R_OBS, THETA_OBS = 55.0, 0.392


def wrap(a):
    w = math.atan2(math.sin(a), math.cos(a))
    return math.pi if w <= -math.pi else w


def visible(p, q, psi, pos):
    dx, dy = pos[0] - p, pos[1] - q
    d = math.hypot(dx, dy)
    return d == 0 or (d <= R_OBS and abs(wrap(math.atan2(dy, dx) - psi)) <= THETA_OBS)


def episode(rng, steps):
    obstacles = []
    for i in range(4):
        x, y = rng.uniform(60, 140), rng.uniform(60, 140)
        vx = rng.uniform(-0.3, 0.3) if i == 0 else 0.0
        track = [[x + vx * t, y] for t in range(steps + 1)] if vx else [[x, y]]
        obstacles.append({"id": i, "radius": 5.0, "track": track})
    goal = [180.0, 180.0]
    p, q = rng.uniform(15, 40), rng.uniform(15, 40)
    phi = psi = math.atan2(goal[1] - q, goal[0] - p)
    out = []
    for t in range(steps + 1):
        z = []
        for ob in obstacles:
            pos = ob["track"][min(t, len(ob["track"]) - 1)]
            if visible(p, q, psi, pos) and rng.random() < 0.8:
                z.append(ob["id"])
        if t == steps:
            out.append({"t": t, "s": [p, q, phi, psi, 0.0], "u": [0.0, 0.0, 0.0], "z": z})
            break
        heading = math.atan2(goal[1] - q, goal[0] - p) + rng.uniform(-0.4, 0.4)
        dx, dy = 0.9 * math.cos(heading), 0.9 * math.sin(heading)
        dpsi = rng.uniform(-0.15, 0.15)
        out.append({"t": t, "s": [p, q, phi, psi, 0.0], "u": [dx, dy, dpsi], "z": z})
        p, q = p + dx, q + dy
        phi = math.atan2(dy, dx)
        psi = wrap(psi + dpsi)
    scenario = {"goal": goal, "bounds": [0.0, 0.0, 200.0, 200.0], "obstacles": obstacles, "L": None}
    return {"scenario": scenario, "steps": out, "outcome": "timeout"}


def main():
    rng = random.Random(2024)
    header = {"schema": 1, "mode": "pointmass", "angle_convention": "half", "h": 0.1, "sensor": None, "seed": None}
    with open("pointmass_game.jsonl", "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for n in (40, 25, 60):
            f.write(json.dumps(episode(rng, n)) + "\n")


if __name__ == "__main__":
    main()
