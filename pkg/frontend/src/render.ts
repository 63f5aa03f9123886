/** SVG tree rendering: depth-layered columns, root at the left, one row
 *  per leaf. Hidden nodes show "?" until clicked. Each leaf carries a
 *  "take" capsule that commits the root-to-leaf path. */

import { childrenMap, isLeaf, rootId } from "./model.js";
import { TrialSpecDoc } from "./schema.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 920;
const HEIGHT = 540;
const NODE_R = 26;

export interface LayoutNode {
  id: number;
  depth: number;
  parent: number | null;
  x: number;
  y: number;
}

/** Column per depth, leaves evenly spaced, parents centered on children. */
export function layoutTree(spec: TrialSpecDoc,
                           width = WIDTH, height = HEIGHT): LayoutNode[] {
  const kids = childrenMap(spec.nodes);
  const maxDepth = Math.max(...spec.nodes.map((n) => n.depth));
  const leaves = spec.nodes.filter((n) => kids.get(n.id)!.length === 0);
  const colGap = (width - 180) / Math.max(1, maxDepth);
  const rowGap = (height - 100) / Math.max(1, leaves.length - 1);

  const ys = new Map<number, number>();
  let row = 0;
  const assign = (id: number): number => {
    const below = kids.get(id)!;
    if (below.length === 0) {
      const y = 50 + row * rowGap;
      row += 1;
      ys.set(id, y);
      return y;
    }
    const childYs = below.map(assign);
    const y = childYs.reduce((a, b) => a + b, 0) / childYs.length;
    ys.set(id, y);
    return y;
  };
  assign(rootId(spec.nodes));

  return spec.nodes.map((n) => ({
    id: n.id,
    depth: n.depth,
    parent: n.parent,
    x: 70 + n.depth * colGap,
    y: ys.get(n.id)!,
  }));
}

export interface TreeHandlers {
  onReveal(id: number): void;
  onChoose(leaf: number): void;
}

function el<K extends keyof SVGElementTagNameMap>(
  name: K, attrs: Record<string, string>): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

export class TreeView {
  private svg: SVGSVGElement;
  private labels = new Map<number, SVGTextElement>();
  private circles = new Map<number, SVGCircleElement>();
  private enabled = true;

  constructor(svg: SVGSVGElement) {
    this.svg = svg;
    svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  }

  render(spec: TrialSpecDoc, handlers: TreeHandlers) {
    this.svg.replaceChildren();
    this.labels.clear();
    this.circles.clear();
    this.enabled = true;

    const nodes = layoutTree(spec);
    const byId = new Map(nodes.map((n) => [n.id, n]));

    for (const n of nodes) {
      if (n.parent === null) continue;
      const p = byId.get(n.parent)!;
      this.svg.appendChild(el("line", {
        x1: String(p.x), y1: String(p.y),
        x2: String(n.x), y2: String(n.y),
        class: "edge",
      }));
    }

    for (const n of nodes) {
      const group = el("g", { class: "node-group" });
      const isRoot = n.parent === null;
      const circle = el("circle", {
        cx: String(n.x), cy: String(n.y), r: String(NODE_R),
        class: isRoot ? "node root" : "node hidden",
      });
      const label = el("text", {
        x: String(n.x), y: String(n.y + 5),
        "text-anchor": "middle",
        class: "node-label",
      });
      label.textContent = isRoot ? "start" : "?";
      if (!isRoot) {
        circle.addEventListener("click", () => {
          if (this.enabled) handlers.onReveal(n.id);
        });
      }
      group.appendChild(circle);
      group.appendChild(label);
      this.svg.appendChild(group);
      this.circles.set(n.id, circle);
      this.labels.set(n.id, label);

      if (!isRoot && isLeaf(spec, n.id)) {
        const bx = n.x + NODE_R + 14;
        const by = n.y - 12;
        const btn = el("g", { class: "take" });
        btn.appendChild(el("rect", {
          x: String(bx), y: String(by), rx: "6",
          width: "58", height: "24",
        }));
        const t = el("text", {
          x: String(bx + 29), y: String(by + 16),
          "text-anchor": "middle",
        });
        t.textContent = "take";
        btn.appendChild(t);
        btn.addEventListener("click", () => {
          if (this.enabled) handlers.onChoose(n.id);
        });
        this.svg.appendChild(btn);
      }
    }
  }

  setValue(id: number, value: number) {
    const label = this.labels.get(id);
    const circle = this.circles.get(id);
    if (!label || !circle) return;
    label.textContent = String(value);
    circle.setAttribute("class",
      value >= 0 ? "node revealed gain" : "node revealed loss");
  }

  /** Brief visual feedback when a revealed node is clicked again. */
  flash(id: number) {
    const circle = this.circles.get(id);
    if (!circle) return;
    circle.classList.add("flash");
    setTimeout(() => circle.classList.remove("flash"), 350);
  }

  markPath(path: number[]) {
    for (const id of path) {
      this.circles.get(id)?.classList.add("chosen");
    }
  }

  setEnabled(on: boolean) {
    this.enabled = on;
    this.svg.classList.toggle("disabled", !on);
  }
}
