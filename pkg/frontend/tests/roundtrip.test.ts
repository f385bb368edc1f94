import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import { describe, expect, it } from 'vitest';

import { validateOpShape } from '../src/editops.js';
import { foldOps, graphsEqual } from '../src/graph.js';
import type { EditOpDoc, SceneGraphDoc } from '../src/types.js';

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(
  readFileSync(join(here, 'fixtures', 'roundtrip.json'), 'utf-8'),
) as { graph: SceneGraphDoc; ops: EditOpDoc[]; folded: SceneGraphDoc };

describe('shared round-trip fixture', () => {
  it('every op passes the client-side shape check', () => {
    for (const op of fixture.ops) expect(validateOpShape(op)).toBeNull();
  });

  it('the client fold of the gesture sequence matches the pinned graph', () => {
    // The service-side test pins its fold to the same fixture, so passing
    // here plus there proves the two folds agree.
    const folded = foldOps(fixture.graph, fixture.ops);
    expect(graphsEqual(folded, fixture.folded)).toBe(true);
  });

  it('each intermediate graph stays structurally valid', () => {
    let graph = fixture.graph;
    for (const op of fixture.ops) {
      graph = foldOps(graph, [op]);
      const ids = new Set(graph.objects.map((o) => o.id));
      expect(ids.size).toBe(graph.objects.length);
      for (const e of graph.relationships) {
        expect(ids.has(e.subject)).toBe(true);
        expect(ids.has(e.object)).toBe(true);
      }
    }
  });
});
