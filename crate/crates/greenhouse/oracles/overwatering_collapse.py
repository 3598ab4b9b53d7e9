"""Straight-line re-simulation of the pinned greenhouse variant.

Temperature fixed at 20 C, every plant starts with 2 L, req_water 0.25,
health 0.5, and the default 200 L is spread over 200 pots each day.
Prints the first day on which every plant has health 0, plus the
per-day alive counts observed at the top of each day.
"""

N = 200
temp = 20.0
humidity = 0.6
water = [2.0] * N
health = [0.5] * N
req = 0.25

day = 0
while True:
    alive = sum(1 for h in health if h > 0)
    print(f"day {day} alive: {alive}, dead: {N - alive}")
    if alive == 0:
        print(f"collapse_day={day}")
        break
    f = temp / 100 * (1 - humidity)
    evaporated = 0.0
    for i in range(N):
        evaporated += f * water[i]
        water[i] = max(0, water[i] - f * water[i])
    humidity = (humidity * 0.20 + evaporated / 2400) / 0.20
    humidity = 0.8 * humidity + 0.2 * 0.6
    for i in range(N):
        water[i] = max(0, water[i] - req)
        if health[i] == 0:
            continue
        if water[i] <= 0 or water[i] > 3:
            health[i] = max(0, health[i] - 0.25)
        else:
            health[i] = min(1, health[i] + 0.1)
    for i in range(N):
        water[i] += 200 / N
    day += 1
    print(f"  humidity={humidity!r} water0={water[0]!r} health0={health[0]!r}")
