"""Run a Turing machine on both lattice encodings and compare with the interpreter.

The two-step lattice needs two network cycles per machine step (a parity
clock separates "write" from "move"); the real-time lattice needs one.
"""

from trnn.encoding import column_width, encode_tm, lattice_trace, verify_simulation
from trnn.turing import random_tm, tm_run, write_one_at_end


def main():
    tm, tape = write_one_at_end(), [1, 1, 1]
    print("interpreter:", tm_run(tm, tape).config)
    for variant in ("two_step", "real_time"):
        lat = encode_tm(tm, tape, variant)
        print(f"\n{variant}: K={column_width(tm, variant)} neurons per column")
        _, text = lattice_trace(lat, 4 * lat.cycles_per_tm_step)
        print(text, end="")

    print("\nrandom machines, 200 steps each:")
    for seed in range(5):
        tm = random_tm(4, 3, seed)
        for variant in ("two_step", "real_time"):
            rep = verify_simulation(tm, [1, 2, 0, 1], variant, 200)
            print(f"  seed={seed} {variant:<9} ok={rep.ok} tm_steps={rep.tm_steps} "
                  f"network_steps={rep.network_steps}")


if __name__ == "__main__":
    main()
