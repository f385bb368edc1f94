import type { SceneGraphDoc } from '../src/types.js';

/** A session graph matching the server's JSON schema. */
export function sampleGraph(): SceneGraphDoc {
  return {
    schema_version: 1,
    image: 'synthetic_0',
    width: 64,
    height: 64,
    objects: [
      {
        id: 'obj_0',
        category: 'cylinder',
        attributes: { color: 'blue' },
        bbox: [0.1, 0.2, 0.3, 0.5],
      },
      {
        id: 'obj_1',
        category: 'cube',
        attributes: { color: 'red' },
        bbox: [0.5, 0.3, 0.7, 0.6],
      },
      {
        id: 'obj_2',
        category: 'sphere',
        attributes: { color: 'green' },
        bbox: [0.6, 0.7, 0.8, 0.9],
      },
    ],
    relationships: [
      { subject: 'obj_0', predicate: 'front of', object: 'obj_1' },
      { subject: 'obj_0', predicate: 'left of', object: 'obj_2' },
      { subject: 'obj_1', predicate: 'behind', object: 'obj_2' },
    ],
  };
}
