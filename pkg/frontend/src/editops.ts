/** Builders for the four edit operations.
 *
 * Each gesture in the UI maps to exactly one of these; the output is the
 * EditOp JSON the service accepts verbatim.
 */

import type { Bbox, EditOpDoc, ObjectNodeDoc, RelationshipDoc } from './types.js';

export function removeOp(targetId: string): EditOpDoc {
  return { schema_version: 1, kind: 'remove', target_id: targetId };
}

export function replaceOp(
  targetId: string,
  category: string,
  attributes: Record<string, string>,
  bbox: Bbox,
): EditOpDoc {
  return {
    schema_version: 1,
    kind: 'replace',
    target_id: targetId,
    new_node: { id: targetId, category, attributes, bbox },
  };
}

export function relationshipChangeOp(
  targetId: string,
  oldEdge: RelationshipDoc,
  newEdge: RelationshipDoc,
): EditOpDoc {
  return {
    schema_version: 1,
    kind: 'relationship_change',
    target_id: targetId,
    edge_change: { old: oldEdge, new: newEdge },
  };
}

export function predicateChangeOp(
  edge: RelationshipDoc,
  newPredicate: string,
): EditOpDoc {
  return relationshipChangeOp(edge.subject, edge, {
    subject: edge.subject,
    predicate: newPredicate,
    object: edge.object,
  });
}

export function addOp(
  node: ObjectNodeDoc,
  edges: RelationshipDoc[],
  objectSource?: { image: string; bbox: Bbox },
): EditOpDoc {
  const op: EditOpDoc = {
    schema_version: 1,
    kind: 'add',
    target_id: node.id,
    new_node: node,
    new_edges: edges,
  };
  if (objectSource) op.object_source = objectSource;
  return op;
}

/** Client-side shape check mirroring the server's per-kind requirements;
 * catches broken gestures before a round trip. */
export function validateOpShape(op: EditOpDoc): string | null {
  switch (op.kind) {
    case 'remove':
      return op.target_id ? null : 'remove requires target_id';
    case 'replace':
      return op.target_id && op.new_node
        ? null
        : 'replace requires target_id and new_node';
    case 'relationship_change': {
      if (!op.target_id || !op.edge_change) {
        return 'relationship_change requires target_id and edge_change';
      }
      const { old, new: next } = op.edge_change;
      const sameOrder = old.subject === next.subject && old.object === next.object;
      const swapped = old.subject === next.object && old.object === next.subject;
      if (sameOrder && old.predicate === next.predicate) {
        return 'edge change is a no-op';
      }
      if (swapped && old.predicate !== next.predicate) {
        return 'change the predicate or the orientation, not both';
      }
      if (!sameOrder && !swapped) return 'edge endpoints must match';
      return null;
    }
    case 'add':
      if (!op.new_node) return 'add requires new_node';
      for (const e of op.new_edges ?? []) {
        if (e.subject !== op.new_node.id && e.object !== op.new_node.id) {
          return `edge ${e.subject}-${e.predicate}-${e.object} does not involve the new node`;
        }
      }
      return null;
  }
}
