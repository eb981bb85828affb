"""Generate the shipped single-phase-equivalent example feeders and clusterings.

The tables below are reconstructions in the style of the IEEE 37-node and
123-node test feeders: branch topology and section lengths follow the public
test-feeder layout, each line uses the average self impedance of its
configuration, and each node carries its total (all-phase) spot load.
Regulators, capacitors, switches and transformers are modeled as plain line
sections or omitted. The data are NOT the published feeders and must not be
used for number matching.

Per-unit conventions (repo-local choices, not taken from any publication):

* S_base = 100 MVA (three-phase) for both feeders; V_base = 4.8 kV (37-node-style)
  and 4.16 kV (123-node-style) line-to-line. The power base fixes the scale of
  the per-unit decision variables, and with it how the fixed step sizes
  behave; 100 MVA gives well-conditioned primal-dual dynamics.
* Section lengths are multiplied by LENGTH_SCALE (0.35 and 0.5). Averaging the
  phases and lumping all-phase load on one conductor makes the equivalent
  much weaker than the real feeders; without the shortening the nonlinear
  power flow collapses well below the load scalings used in the studies
  (about x6 and x3 at full length).

Run ``python scripts/make_feeders.py`` to rewrite the JSON files under
``src/radial_opf/data``.
"""

from __future__ import annotations

import json
from pathlib import Path

FT_PER_MILE = 5280.0
S_BASE_MVA = 100.0
LENGTH_SCALE = {"ieee37_style": 0.35, "ieee123_style": 0.5}
OUT = Path(__file__).resolve().parents[1] / "src" / "radial_opf" / "data"

# ---------------------------------------------------------------- 37-node style

Z37 = {  # ohm/mile, average of the phase self impedances
    "721": (0.2926, 0.1973),
    "722": (0.4751, 0.2973),
    "723": (1.2936, 0.6713),
    "724": (2.0952, 0.7758),
    "xfm": (0.09, 0.18),  # small transformer stub, given per 1000 ft
}

LINES37 = [  # from, to, length ft, config
    ("799", "701", 1850, "721"),
    ("701", "702", 960, "722"),
    ("702", "705", 400, "724"),
    ("702", "713", 360, "723"),
    ("702", "703", 1320, "722"),
    ("703", "727", 240, "724"),
    ("703", "730", 600, "723"),
    ("704", "714", 80, "724"),
    ("704", "720", 800, "723"),
    ("705", "742", 320, "724"),
    ("705", "712", 240, "724"),
    ("706", "725", 280, "724"),
    ("707", "724", 760, "724"),
    ("707", "722", 120, "724"),
    ("708", "733", 320, "723"),
    ("708", "732", 320, "724"),
    ("709", "731", 600, "723"),
    ("709", "708", 320, "723"),
    ("710", "735", 200, "724"),
    ("710", "736", 1280, "724"),
    ("711", "741", 400, "723"),
    ("711", "740", 200, "724"),
    ("713", "704", 520, "723"),
    ("714", "718", 520, "724"),
    ("720", "707", 920, "724"),
    ("720", "706", 600, "723"),
    ("727", "744", 280, "723"),
    ("730", "709", 200, "723"),
    ("733", "734", 560, "723"),
    ("734", "737", 640, "723"),
    ("734", "710", 520, "724"),
    ("737", "738", 400, "723"),
    ("738", "711", 400, "723"),
    ("744", "728", 200, "724"),
    ("744", "729", 280, "724"),
    ("709", "775", 1000, "xfm"),
]

LOADS37 = {  # kW, kvar (sum over phases)
    "701": (630, 315), "712": (85, 40), "713": (85, 40), "714": (38, 18),
    "718": (85, 40), "720": (85, 40), "722": (161, 80), "724": (42, 21),
    "725": (42, 21), "727": (42, 21), "728": (126, 63), "729": (42, 21),
    "730": (85, 40), "731": (85, 40), "732": (42, 21), "733": (85, 40),
    "734": (42, 21), "735": (85, 40), "736": (42, 21), "737": (140, 70),
    "738": (126, 62), "740": (85, 40), "741": (42, 21), "742": (93, 44),
    "744": (42, 21),
}

# Backbone along the main corridor, laterals as subtrees. Every subtree root
# hangs off a backbone node, so no root path crosses another subtree.
CLUSTERS37 = {
    "subtrees": [
        {"root": "705", "nodes": ["705", "712", "742"]},
        {"root": "713", "nodes": ["713", "704", "714", "718", "720", "706", "725", "707", "722", "724"]},
        {"root": "727", "nodes": ["727", "744", "728", "729"]},
        {"root": "731", "nodes": ["731"]},
        {"root": "732", "nodes": ["732"]},
        {"root": "775", "nodes": ["775"]},
        {"root": "737", "nodes": ["737", "738", "711", "741", "740"]},
        {"root": "710", "nodes": ["710", "735", "736"]},
    ],
    "unclustered": ["701", "702", "703", "730", "709", "708", "733", "734"],
}

# ---------------------------------------------------------------- 123-node style

Z123 = {
    "1": (0.4576, 1.0780), "2": (0.4666, 1.0482), "3": (0.4615, 1.0651),
    "4": (0.4615, 1.0651), "5": (0.4666, 1.0482), "6": (0.4576, 1.0780),
    "7": (0.4576, 1.0780), "8": (0.4576, 1.0780), "9": (1.3292, 1.3475),
    "10": (1.3292, 1.3475), "11": (1.3292, 1.3475), "12": (1.5209, 0.7521),
    "sw": (0.4576, 1.0780),  # closed switches / regulators as a short section
}

LINES123 = [
    ("150", "149", 50, "sw"),
    ("149", "1", 400, "1"),
    ("1", "2", 175, "10"), ("1", "3", 250, "11"), ("1", "7", 300, "1"),
    ("3", "4", 200, "11"), ("3", "5", 325, "11"), ("5", "6", 250, "11"),
    ("7", "8", 200, "1"), ("8", "12", 225, "10"), ("8", "9", 225, "9"),
    ("8", "13", 300, "1"), ("9", "14", 425, "9"), ("13", "34", 150, "11"),
    ("13", "18", 825, "2"), ("14", "11", 250, "9"), ("14", "10", 250, "9"),
    ("15", "16", 375, "11"), ("15", "17", 350, "11"), ("18", "19", 250, "8"),
    ("18", "21", 300, "2"), ("19", "20", 325, "8"), ("21", "22", 525, "10"),
    ("21", "23", 250, "2"), ("23", "24", 550, "11"), ("23", "25", 275, "2"),
    ("25", "26", 350, "7"), ("25", "28", 200, "2"), ("26", "27", 275, "7"),
    ("26", "31", 225, "11"), ("27", "33", 500, "9"), ("28", "29", 300, "2"),
    ("29", "30", 350, "2"), ("30", "250", 200, "2"), ("31", "32", 300, "11"),
    ("34", "15", 100, "11"), ("35", "36", 650, "8"), ("35", "40", 250, "1"),
    ("36", "37", 300, "9"), ("36", "38", 250, "10"), ("38", "39", 325, "10"),
    ("40", "41", 325, "11"), ("40", "42", 250, "1"), ("42", "43", 500, "10"),
    ("42", "44", 200, "1"), ("44", "45", 200, "9"), ("44", "47", 250, "1"),
    ("45", "46", 300, "9"), ("47", "48", 150, "4"), ("47", "49", 250, "4"),
    ("49", "50", 250, "4"), ("50", "51", 250, "4"), ("51", "151", 500, "4"),
    ("52", "53", 200, "1"), ("53", "54", 125, "1"), ("54", "55", 275, "1"),
    ("54", "57", 350, "3"), ("55", "56", 275, "1"), ("57", "58", 250, "10"),
    ("57", "60", 750, "3"), ("58", "59", 250, "10"), ("60", "61", 550, "5"),
    ("60", "62", 250, "12"), ("62", "63", 175, "12"), ("63", "64", 350, "12"),
    ("64", "65", 425, "12"), ("65", "66", 325, "12"), ("67", "68", 200, "9"),
    ("67", "72", 275, "3"), ("67", "97", 250, "3"), ("68", "69", 275, "9"),
    ("69", "70", 325, "9"), ("70", "71", 275, "9"), ("72", "73", 275, "11"),
    ("72", "76", 200, "3"), ("73", "74", 350, "11"), ("74", "75", 400, "11"),
    ("76", "77", 400, "6"), ("76", "86", 700, "3"), ("77", "78", 100, "6"),
    ("78", "79", 225, "6"), ("78", "80", 475, "6"), ("80", "81", 475, "6"),
    ("81", "82", 250, "6"), ("81", "84", 675, "11"), ("82", "83", 250, "6"),
    ("84", "85", 475, "11"), ("86", "87", 450, "6"), ("87", "88", 175, "9"),
    ("87", "89", 275, "6"), ("89", "90", 225, "10"), ("89", "91", 225, "6"),
    ("91", "92", 300, "11"), ("91", "93", 225, "6"), ("93", "94", 275, "9"),
    ("93", "95", 300, "6"), ("95", "96", 200, "10"), ("97", "98", 275, "3"),
    ("98", "99", 550, "3"), ("99", "100", 300, "3"), ("100", "450", 800, "3"),
    ("101", "102", 225, "11"), ("101", "105", 275, "3"), ("102", "103", 325, "11"),
    ("103", "104", 700, "11"), ("105", "106", 225, "10"), ("105", "108", 325, "3"),
    ("106", "107", 575, "10"), ("108", "109", 450, "9"), ("108", "300", 1000, "3"),
    ("109", "110", 300, "9"), ("110", "111", 575, "9"), ("110", "112", 125, "9"),
    ("112", "113", 525, "9"), ("113", "114", 325, "9"),
    ("18", "135", 50, "sw"), ("135", "35", 375, "4"),
    ("13", "152", 50, "sw"), ("152", "52", 400, "1"),
    ("60", "160", 50, "sw"), ("160", "67", 350, "6"),
    ("97", "197", 50, "sw"), ("197", "101", 250, "3"),
]

_L123_40 = [
    "1", "4", "6", "9", "11", "16", "19", "20", "22", "24", "28", "29", "30", "33",
    "34", "35", "37", "43", "50", "52", "53", "62", "63", "69", "71", "73", "74",
    "75", "77", "79", "80", "82", "85", "87", "88", "90", "92", "94", "98", "99",
    "100", "103", "104", "106", "107", "109", "113",
]
_L123_20 = [
    "2", "5", "7", "10", "12", "17", "31", "32", "38", "39", "41", "42", "45", "46",
    "51", "55", "56", "58", "59", "60", "68", "70", "83", "84", "86", "95", "96",
    "102", "111", "112", "114",
]
LOADS123 = {nm: (40, 20) for nm in _L123_40}
LOADS123.update({nm: (20, 10) for nm in _L123_20})
LOADS123.update({
    "47": (105, 75), "48": (210, 150), "49": (140, 95), "64": (75, 35),
    "65": (140, 100), "66": (75, 35), "76": (245, 180),
})

# Main trunk plus the heads of the big branches form the backbone; laterals
# and the far ends of the branches are regional subtrees.
CLUSTERS123 = {
    "subtrees": [
        {"root": "2", "nodes": ["2"]},
        {"root": "3", "nodes": ["3", "4", "5", "6"]},
        {"root": "9", "nodes": ["9", "14", "10", "11"]},
        {"root": "12", "nodes": ["12"]},
        {"root": "34", "nodes": ["34", "15", "16", "17"]},
        {"root": "19", "nodes": ["19", "20"]},
        {"root": "22", "nodes": ["22"]},
        {"root": "24", "nodes": ["24"]},
        {"root": "26", "nodes": ["26", "27", "31", "32", "33"]},
        {"root": "28", "nodes": ["28", "29", "30", "250"]},
        {"root": "135", "nodes": ["135", "35", "36", "37", "38", "39", "40", "41", "42", "43",
                                  "44", "45", "46", "47", "48", "49", "50", "51", "151"]},
        {"root": "55", "nodes": ["55", "56"]},
        {"root": "58", "nodes": ["58", "59"]},
        {"root": "61", "nodes": ["61"]},
        {"root": "62", "nodes": ["62", "63", "64", "65", "66"]},
        {"root": "68", "nodes": ["68", "69", "70", "71"]},
        {"root": "73", "nodes": ["73", "74", "75"]},
        {"root": "77", "nodes": ["77", "78", "79", "80", "81", "82", "83", "84", "85"]},
        {"root": "86", "nodes": ["86", "87", "88", "89", "90", "91", "92", "93", "94", "95", "96"]},
        {"root": "98", "nodes": ["98", "99", "100", "450"]},
        {"root": "102", "nodes": ["102", "103", "104"]},
        {"root": "105", "nodes": ["105", "106", "107", "108", "109", "110", "111", "112",
                                  "113", "114", "300"]},
    ],
    "unclustered": [
        "149", "1", "7", "8", "13", "18", "21", "23", "25", "152", "52", "53", "54", "57",
        "60", "160", "67", "72", "76", "97", "197", "101",
    ],
}


def build(lines, zcfg, loads, v_base_kv, s_base_mva, root, length_scale=1.0):
    z_base = v_base_kv**2 / s_base_mva
    names = []
    for a, b, _, _ in lines:
        for nm in (a, b):
            if nm not in names:
                names.append(nm)
    nodes = []
    for nm in names:
        if nm == root:
            continue
        kw, kvar = loads.get(nm, (0.0, 0.0))
        nodes.append({
            "name": nm,
            "p_nom_pu": round(-kw / 1000.0 / s_base_mva, 10),
            "q_nom_pu": round(-kvar / 1000.0 / s_base_mva, 10),
            "controllable": kw > 0,
        })
    out_lines = []
    for a, b, ft, cfg in lines:
        r, x = zcfg[cfg]
        miles = length_scale * ft / (1000.0 if cfg == "xfm" else FT_PER_MILE)
        out_lines.append({
            "from": a, "to": b,
            "r_pu": round(r * miles / z_base, 10),
            "x_pu": round(x * miles / z_base, 10),
        })
    return {
        "v0_squared_pu": 1.05**2,
        "root": root,
        "base_kv": v_base_kv,
        "base_mva": s_base_mva,
        "length_scale": length_scale,
        "nodes": nodes,
        "lines": out_lines,
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    feeders = {
        "ieee37_style": (
            build(LINES37, Z37, LOADS37, 4.8, S_BASE_MVA, "799", LENGTH_SCALE["ieee37_style"]),
            CLUSTERS37,
        ),
        "ieee123_style": (
            build(LINES123, Z123, LOADS123, 4.16, S_BASE_MVA, "150", LENGTH_SCALE["ieee123_style"]),
            CLUSTERS123,
        ),
    }
    for stem, (net, clusters) in feeders.items():
        (OUT / f"{stem}.json").write_text(json.dumps(net, indent=1) + "\n")
        (OUT / f"{stem}_clustering.json").write_text(json.dumps(clusters, indent=1) + "\n")
        print(f"wrote {stem}: {len(net['nodes'])} nodes, {len(net['lines'])} lines")


if __name__ == "__main__":
    main()
