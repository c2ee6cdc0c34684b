#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes the home world fixtures: the 40-object graph plus the full_block
and phantom_sink scenarios that share its floor plan."""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
RES, ROWS, COLS = 0.5, 40, 80

# Walls as segments (x0, y0, x1, y1); doors are the gaps between them.
WALLS = [
    # hallway north wall, doors into the living room (21.5-24.5) and bedroom (32-34)
    (0.5, 12.25, 21.25, 12.25), (24.75, 12.25, 31.75, 12.25), (34.25, 12.25, 39.5, 12.25),
    # hallway south wall, doors into the kitchen (14-16) and bathroom (27-29)
    (0.5, 7.75, 13.75, 7.75), (16.25, 7.75, 26.75, 7.75), (29.25, 7.75, 39.5, 7.75),
    # study | living room
    (20.25, 12.5, 20.25, 19.5),
    # living room | bedroom, door at y 15.5-18.5
    (30.25, 12.5, 30.25, 15.25), (30.25, 18.75, 30.25, 19.5),
    # kitchen | bathroom
    (22.25, 0.5, 22.25, 7.5),
]

ROOMS = {
    "room_1": ("hallway", (10.0, 10.0), "hallway"),
    "room_3": ("study", (10.0, 16.0), "study"),
    "room_4": ("living_room", (25.0, 16.0), "living room with a sofa to rest"),
    "room_5": ("bedroom", (35.0, 16.0), "bedroom to sleep"),
    "room_6": ("kitchen", (12.0, 4.0), "kitchen with a sink"),
    "room_7": ("bathroom", (31.0, 4.0), "bathroom"),
}

OBJECTS = [
    ("object_0_1_10", "room_1", "shoe_rack", (1.5, 11.5), None),
    ("object_0_1_11", "room_1", "coat_hanger", (6.0, 11.5), None),
    ("object_0_1_12", "room_1", "umbrella_stand", (18.0, 8.5), None),
    ("object_0_1_13", "room_1", "side_table", (26.0, 11.5), None),
    ("object_0_1_14", "room_1", "floor_lamp", (38.5, 8.5), None),
    ("object_0_3_20", "room_3", "desk", (4.0, 18.5), None),
    ("object_0_3_21", "room_3", "office_chair", (5.0, 17.0), None),
    ("object_0_3_22", "room_3", "bookshelf", (12.0, 19.0), None),
    ("object_0_3_23", "room_3", "computer", (3.5, 19.0), None),
    ("object_0_3_24", "room_3", "printer", (18.5, 19.0), None),
    ("object_0_3_25", "room_3", "filing_cabinet", (18.5, 13.5), None),
    ("object_0_4_30", "room_4", "sofa", (25.0, 19.0), None),
    ("object_0_4_31", "room_4", "tv", (21.5, 16.0), None),
    ("object_0_4_33", "room_4", "coffee_table", (25.0, 17.5), None),
    ("object_0_4_34", "room_4", "armchair", (28.5, 19.0), None),
    ("object_0_4_35", "room_4", "rug", (25.0, 15.0), None),
    ("object_0_4_36", "room_4", "plant", (21.5, 13.5), None),
    ("object_0_4_37", "room_4", "fireplace", (28.5, 13.5), None),
    ("object_0_4_38", "room_4", "speaker", (21.5, 19.0), None),
    ("object_0_5_40", "room_5", "bed", (37.0, 18.0), "bed to rest and sleep"),
    ("object_0_5_41", "room_5", "nightstand", (38.5, 16.0), None),
    ("object_0_5_42", "room_5", "wardrobe", (31.5, 19.0), None),
    ("object_0_5_43", "room_5", "dresser", (35.0, 13.5), None),
    ("object_0_5_44", "room_5", "mirror", (31.5, 13.5), None),
    ("object_0_5_45", "room_5", "alarm_clock", (38.5, 19.0), None),
    ("object_0_6_50", "room_6", "stove", (4.0, 1.5), None),
    ("object_0_6_51", "room_6", "fridge", (1.5, 6.0), None),
    ("object_0_6_52", "room_6", "sink", (18.0, 2.0), "sink to wash hands"),
    ("object_0_6_53", "room_6", "microwave", (6.0, 1.5), None),
    ("object_0_6_54", "room_6", "dishwasher", (20.0, 1.5), None),
    ("object_0_6_55", "room_6", "kitchen_table", (10.0, 5.0), None),
    ("object_0_6_56", "room_6", "toaster", (14.0, 1.5), None),
    ("object_0_6_57", "room_6", "oven", (2.5, 1.5), None),
    ("object_0_6_58", "room_6", "cupboard", (21.0, 6.5), None),
    ("object_0_7_60", "room_7", "toilet", (38.5, 1.5), None),
    ("object_0_7_61", "room_7", "bathtub", (34.0, 1.5), None),
    ("object_0_7_62", "room_7", "towel_rack", (23.0, 6.5), None),
    ("object_0_7_63", "room_7", "shower", (38.5, 6.5), None),
    ("object_0_7_64", "room_7", "washing_machine", (23.0, 1.5), None),
    ("object_0_7_65", "room_7", "laundry_basket", (26.0, 1.5), None),
]


def graph():
    nodes = [
        {"id": "building", "level": "root"},
        {"id": "floor_0", "level": "floor", "tag": "ground_floor", "parent": "building", "position": [20.0, 10.0]},
    ]
    for rid, (tag, pos, caption) in ROOMS.items():
        nodes.append({"id": rid, "level": "room", "tag": tag, "parent": "floor_0", "position": list(pos),
                      "caption": caption})
    for oid, room, tag, pos, caption in OBJECTS:
        node = {"id": oid, "level": "object", "tag": tag, "parent": room, "position": list(pos)}
        if caption:
            node["caption"] = caption
        nodes.append(node)
    return {"nodes": nodes}


def rle(row):
    out, i = [], 0
    while i < len(row):
        j = i
        while j < len(row) and row[j] == row[i]:
            j += 1
        out.append(f"{j - i}x{row[i]}")
        i = j
    return " ".join(out)


def border_rows():
    rows = []
    for r in range(ROWS):
        if r in (0, ROWS - 1):
            rows.append([1] * COLS)
        else:
            rows.append([1] + [0] * (COLS - 2) + [1])
    return [rle(r) for r in rows]


def base(sid, instruction, llm, injections, budgets):
    return {
        "id": sid,
        "grid": {"resolution": RES, "rows": border_rows()},
        "world": {"robot_radius": 0.3, "dt": 0.1, "v_ref": 1.5, "v_max": 2.025, "w_max": 1.5, "distance_cap": 1.5},
        "obstacles": [
            {"name": f"wall_{i}", "segment": [[w[0], w[1]], [w[2], w[3]]], "spacing": 0.25, "margin": 0.25}
            for i, w in enumerate(WALLS)
        ],
        "objects": [{"id": o[0], "tag": o[2], "position": list(o[3])} for o in OBJECTS],
        "start": [2.25, 10.25, 0.0],
        "graph_file": "../graphs/home_40.json",
        "instruction": instruction,
        "goal_tolerance": 0.5,
        "injections": injections,
        "budgets": budgets,
        "scripts": {"llm": f"../scripts/{llm}", "vlm": "../scripts/home_vlm.json"},
        "memory": {"file": "../memory/doorway_records.json", "query": "doorway", "k": 3},
        "evolution": {"epsilon": 0.005, "clip": 10.0, "fd_scale": 30.0, "steps": 200, "mode": "ilad"},
        "controller": {"horizon": 20, "max_iters": 200, "g_tol": 1e-4},
        "detection": {"stall_distance": 0.05, "stall_window": 30, "detection_radius": 1.0},
        "gcot_k": 3,
    }


def write(path, doc):
    path.write_text(json.dumps(doc, indent=2) + "\n")


def main():
    write(ROOT / "graphs" / "home_40.json", graph())
    budgets = {"X": [5, 10], "Y": 20, "timeout": 600.0, "attempt_time_limit": 90.0, "gcot_iterations": 3}
    block = {"kind": "block_cells", "step": 1, "name": "box", "rect": [[24, 64], [24, 67]], "points_spacing": 0.25}
    write(ROOT / "scenarios" / "full_block.json",
          base("full_block", "rest due to lack of sleep", "full_block_llm.json", [block], budgets))
    phantom = {"kind": "corrupt_graph", "step": 0, "name": "phantom",
               "edit": {"kind": "add_phantom", "id": "object_0_6_32", "parent": "room_6", "tag": "sink_cabinet",
                        "position": [8.0, 2.0]}}
    write(ROOT / "scenarios" / "phantom_sink.json",
          base("phantom_sink", "wash hands since hands are dirty", "phantom_sink_llm.json", [phantom], budgets))


if __name__ == "__main__":
    main()
