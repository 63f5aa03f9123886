/** Practice mode: trials built and revealed locally, nothing uploaded.
 *
 * The condition table mirrors the service's bundled table (same layered
 * [3,1,2] tree, same depth supports, same click costs). Practice draws use
 * a local generator; practice data never uploads, so parity with the
 * service's sampler is not required.
 */

import { NodeSpec, RewardDist, TRIALSPEC_SCHEMA, TrialSpecDoc } from "./schema.js";

export const TREE_BRANCHING = [3, 1, 2];

interface ConditionDef {
  click_cost: number;
  depth_supports: Record<string, number[]>;
}

export const CONDITION_TABLE: Record<string, ConditionDef> = {
  "exp1-far": {
    click_cost: 1.0,
    depth_supports: {
      "1": [-4, -2, 2, 4],
      "2": [-8, -4, 4, 8],
      "3": [-48, -24, 24, 48],
    },
  },
  "exp1-near": {
    click_cost: 1.0,
    depth_supports: {
      "1": [-48, -24, 24, 48],
      "2": [-8, -4, 4, 8],
      "3": [-4, -2, 2, 4],
    },
  },
  "exp1-bestfirst": {
    click_cost: 1.0,
    depth_supports: {
      "1": [-10, -5, 5, 10],
      "2": [-10, -5, 5, 10],
      "3": [-10, -5, 5, 10],
    },
  },
  "exp2-lowcost-lowvariance": {
    click_cost: 1.0,
    depth_supports: {
      "1": [-4, -2, 2, 4],
      "2": [-4, -2, 2, 4],
      "3": [-6, -3, 3, 6],
    },
  },
  "exp2-lowcost-highvariance": {
    click_cost: 1.0,
    depth_supports: {
      "1": [-4, -2, 2, 4],
      "2": [-4, -2, 2, 4],
      "3": [-48, -24, 24, 48],
    },
  },
  "exp2-highcost-lowvariance": {
    click_cost: 5.0,
    depth_supports: {
      "1": [-4, -2, 2, 4],
      "2": [-4, -2, 2, 4],
      "3": [-6, -3, 3, 6],
    },
  },
  "exp2-highcost-highvariance": {
    click_cost: 5.0,
    depth_supports: {
      "1": [-4, -2, 2, 4],
      "2": [-4, -2, 2, 4],
      "3": [-48, -24, 24, 48],
    },
  },
};

export function conditionIds(): string[] {
  return Object.keys(CONDITION_TABLE).sort();
}

/** Small deterministic PRNG (mulberry32); good enough for practice draws. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Build the layered tree for a condition: ids in depth-first preorder
 *  (root 0, then each branch top to bottom), matching the service. */
export function buildSpec(condition: string, seed: number): TrialSpecDoc {
  const def = CONDITION_TABLE[condition];
  if (!def) throw new Error(`unknown condition '${condition}'`);
  const nodes: NodeSpec[] = [{ id: 0, depth: 0, parent: null }];
  const dists: Record<string, RewardDist> = {};
  let next = 1;
  const grow = (parent: number, depth: number) => {
    if (depth > TREE_BRANCHING.length) return;
    const fanout = TREE_BRANCHING[depth - 1];
    for (let i = 0; i < fanout; i++) {
      const id = next++;
      nodes.push({ id, depth, parent });
      const support = def.depth_supports[String(depth)];
      dists[String(id)] = {
        support: support.map((v) => v),
        probs: support.map(() => 1 / support.length),
      };
      grow(id, depth + 1);
    }
  };
  grow(0, 1);
  return {
    schema: TRIALSPEC_SCHEMA,
    click_cost: def.click_cost,
    condition,
    seed,
    nodes,
    reward_dists: dists,
  };
}

/** Draw one realized value per hidden node from its support. */
export function sampleTruth(spec: TrialSpecDoc,
                            rand: () => number): Map<number, number> {
  const truth = new Map<number, number>();
  const ids = Object.keys(spec.reward_dists).map(Number).sort((a, b) => a - b);
  for (const id of ids) {
    const d = spec.reward_dists[String(id)];
    const k = Math.min(d.support.length - 1,
                       Math.floor(rand() * d.support.length));
    truth.set(id, d.support[k]);
  }
  return truth;
}

export interface PracticeSession {
  condition: string;
  click_cost: number;
  specs: TrialSpecDoc[];
  truths: Map<number, number>[];
}

export function practiceSession(condition: string, count: number,
                                seed: number): PracticeSession {
  if (count < 1) throw new Error("count must be at least 1");
  const specs: TrialSpecDoc[] = [];
  const truths: Map<number, number>[] = [];
  for (let i = 0; i < count; i++) {
    const spec = buildSpec(condition, seed + i);
    specs.push(spec);
    truths.push(sampleTruth(spec, mulberry32(seed + i)));
  }
  return {
    condition,
    click_cost: specs[0].click_cost,
    specs,
    truths,
  };
}
