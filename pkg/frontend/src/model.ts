/** Pure tree arithmetic on trial specs: paths, membership, returns. */

import { NodeSpec, TrialSpecDoc } from "./schema.js";

export function rootId(nodes: NodeSpec[]): number {
  const root = nodes.find((n) => n.parent === null);
  if (!root) throw new Error("spec has no root node");
  return root.id;
}

/** Children of each node, ascending by id. */
export function childrenMap(nodes: NodeSpec[]): Map<number, number[]> {
  const kids = new Map<number, number[]>();
  for (const n of nodes) kids.set(n.id, []);
  for (const n of nodes) {
    if (n.parent !== null) kids.get(n.parent)!.push(n.id);
  }
  for (const list of kids.values()) list.sort((a, b) => a - b);
  return kids;
}

export function nonRootIds(spec: TrialSpecDoc): number[] {
  return spec.nodes.filter((n) => n.parent !== null).map((n) => n.id);
}

export function isLeaf(spec: TrialSpecDoc, id: number): boolean {
  return spec.nodes.some((n) => n.id === id) &&
    !spec.nodes.some((n) => n.parent === id);
}

function lexCompare(a: number[], b: number[]): number {
  const n = Math.min(a.length, b.length);
  for (let i = 0; i < n; i++) {
    if (a[i] !== b[i]) return a[i] - b[i];
  }
  return a.length - b.length;
}

/** All root-to-leaf paths as node-id chains excluding the root,
 *  in ascending lexicographic order (the service's ordering). */
export function enumeratePaths(spec: TrialSpecDoc): number[][] {
  const kids = childrenMap(spec.nodes);
  const paths: number[][] = [];
  const walk = (id: number, acc: number[]) => {
    const below = kids.get(id)!;
    if (below.length === 0) {
      paths.push(acc);
      return;
    }
    for (const c of below) walk(c, [...acc, c]);
  };
  walk(rootId(spec.nodes), []);
  paths.sort(lexCompare);
  return paths;
}

/** The unique root-to-leaf chain ending at `leaf` (root excluded). */
export function pathTo(spec: TrialSpecDoc, leaf: number): number[] {
  if (!isLeaf(spec, leaf)) throw new Error(`node ${leaf} is not a leaf`);
  const byId = new Map(spec.nodes.map((n) => [n.id, n]));
  const chain: number[] = [];
  let cur: number | null = leaf;
  while (cur !== null) {
    const node: NodeSpec | undefined = byId.get(cur);
    if (!node) throw new Error(`node ${cur} does not exist`);
    if (node.parent === null) break;
    chain.unshift(node.id);
    cur = node.parent;
  }
  return chain;
}

export function isPath(spec: TrialSpecDoc, candidate: number[]): boolean {
  if (candidate.length === 0) return false;
  const leaf = candidate[candidate.length - 1];
  if (!isLeaf(spec, leaf)) return false;
  const want = pathTo(spec, leaf);
  return want.length === candidate.length &&
    want.every((v, i) => v === candidate[i]);
}

/** Sum of realized values along a committed path. */
export function pathReturn(path: number[], values: Map<number, number>): number {
  let total = 0;
  for (const id of path) {
    const v = values.get(id);
    if (v === undefined) throw new Error(`no revealed value for node ${id}`);
    total += v;
  }
  return total;
}
